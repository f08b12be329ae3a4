#include "cmebal/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cmebal::io {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
    const auto r = traj.values.cols();
    out << "time";
    for (Eigen::Index j = 0; j < r; ++j) {
        const auto jj = static_cast<std::size_t>(j);
        out << ',' << csv_field(jj < traj.labels.size() ? traj.labels[jj] : "y" + std::to_string(j + 1));
    }
    out << "\n";
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        out << format_double(traj.times[i]);
        for (Eigen::Index j = 0; j < r; ++j) out << ',' << format_double(traj.values(static_cast<Eigen::Index>(i), j));
        out << "\n";
    }
}

void write_hsv_csv(std::ostream& out, const Vector& hsv) {
    out << "index,sigma\n";
    for (Eigen::Index i = 0; i < hsv.size(); ++i) out << (i + 1) << ',' << format_double(hsv(i)) << "\n";
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    f << contents;
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) { write_file(path, doc.dump(2) + "\n"); }

}  // namespace cmebal::io
