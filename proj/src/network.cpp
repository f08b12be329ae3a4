#include "cmebal/network.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace cmebal {

namespace {

bool is_ident_start(char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_';
}

bool is_ident_char(char c) {
    return is_ident_start(c) || (c >= '0' && c <= '9');
}

bool valid_identifier(std::string_view s) {
    if (s.empty() || !is_ident_start(s.front())) return false;
    return std::all_of(s.begin(), s.end(), is_ident_char);
}

bool positive_finite(double x) { return std::isfinite(x) && x > 0.0; }

std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void validate_side(const std::vector<StoichTerm>& side, std::size_t n, const char* what) {
    std::set<std::size_t> seen;
    for (const auto& t : side) {
        if (t.species >= n)
            throw NetworkError(std::string(what) + ": species index out of range");
        if (t.count <= 0)
            throw NetworkError(std::string(what) + ": stoichiometric counts must be positive");
        if (!seen.insert(t.species).second)
            throw NetworkError(std::string(what) + ": species listed twice on one side");
    }
}

}  // namespace

int Reaction::order() const {
    int total = 0;
    for (const auto& t : reactants) total += t.count;
    return total;
}

ParseError::ParseError(std::size_t line, std::size_t column, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) +
                         ": " + what),
      line_(line),
      column_(column) {}

ReactionNetwork::ReactionNetwork(std::vector<std::string> species_names,
                                 std::vector<Reaction> reactions, Population initial_state)
    : reactions_(std::move(reactions)), initial_state_(std::move(initial_state)) {
    std::set<std::string> names;
    species_.reserve(species_names.size());
    for (std::size_t i = 0; i < species_names.size(); ++i) {
        auto& name = species_names[i];
        if (!valid_identifier(name)) throw NetworkError("invalid species name '" + name + "'");
        if (!names.insert(name).second) throw NetworkError("duplicate species '" + name + "'");
        species_.push_back({std::move(name), i});
    }
    const auto n = species_.size();
    if (initial_state_.size() != n)
        throw NetworkError("initial state length does not match species count");
    if (std::any_of(initial_state_.begin(), initial_state_.end(), [](int v) { return v < 0; }))
        throw NetworkError("initial state entries must be non-negative");

    for (const auto& r : reactions_) {
        validate_side(r.reactants, n, "reactants");
        validate_side(r.products, n, "products");
        if (const auto* ma = std::get_if<MassAction>(&r.propensity)) {
            if (!positive_finite(ma->rate)) throw NetworkError("nonpositive rate");
            if (r.order() > 2) throw NetworkError("mass-action reactions of order > 2 are not supported");
        } else {
            const auto& mm = std::get<MichaelisMenten>(r.propensity);
            if (!positive_finite(mm.vmax) || !positive_finite(mm.km))
                throw NetworkError("nonpositive rate");
            if (r.reactants.size() != 1 || r.reactants.front().count != 1)
                throw NetworkError("Michaelis-Menten reactions need exactly one reactant molecule");
        }
    }
}

std::optional<std::size_t> ReactionNetwork::species_index(std::string_view name) const {
    for (const auto& s : species_)
        if (s.name == name) return s.index;
    return std::nullopt;
}

ReactionNetwork ReactionNetwork::with_initial_state(Population state) const {
    std::vector<std::string> names;
    for (const auto& s : species_) names.push_back(s.name);
    return ReactionNetwork(std::move(names), reactions_, std::move(state));
}

StoichMatrix stoichiometry(const ReactionNetwork& network) {
    const auto n = static_cast<Eigen::Index>(network.species_count());
    const auto m = static_cast<Eigen::Index>(network.reaction_count());
    StoichMatrix N = StoichMatrix::Zero(n, m);
    for (Eigen::Index k = 0; k < m; ++k) {
        const auto& r = network.reactions()[static_cast<std::size_t>(k)];
        for (const auto& t : r.reactants) N(static_cast<Eigen::Index>(t.species), k) -= t.count;
        for (const auto& t : r.products) N(static_cast<Eigen::Index>(t.species), k) += t.count;
    }
    return N;
}

Population jump_vector(const Reaction& reaction, std::size_t species_count) {
    Population jump(species_count, 0);
    for (const auto& t : reaction.reactants) jump[t.species] -= t.count;
    for (const auto& t : reaction.products) jump[t.species] += t.count;
    return jump;
}

double propensity(const Reaction& reaction, std::span<const int> state) {
    if (const auto* mm = std::get_if<MichaelisMenten>(&reaction.propensity)) {
        const double s = state[reaction.reactants.front().species];
        if (s <= 0.0) return 0.0;
        return mm->vmax * s / (mm->km + s);
    }
    // Product of binomial coefficients C(s_i, alpha_i): k, k s, k s_i s_j, k s (s-1)/2.
    double a = std::get<MassAction>(reaction.propensity).rate;
    for (const auto& t : reaction.reactants) {
        const int s = state[t.species];
        if (s < t.count) return 0.0;
        if (t.count == 1) {
            a *= s;
        } else {
            a *= static_cast<double>(s) * (s - 1) / 2.0;
        }
    }
    return a;
}

// ---------------------------------------------------------------------------
// Parser

namespace {

struct Cursor {
    std::string_view text;
    std::size_t pos = 0;
    std::size_t line = 0;
    std::size_t col0 = 0;  // 1-based column of text[0]

    std::size_t column() const { return col0 + pos; }

    void skip_ws() {
        while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t' || text[pos] == '\r'))
            ++pos;
    }
    bool at_end() {
        skip_ws();
        return pos >= text.size();
    }
    char peek() {
        skip_ws();
        return pos < text.size() ? text[pos] : '\0';
    }
    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(line, column(), msg); }

    bool consume(std::string_view token) {
        skip_ws();
        if (text.substr(pos, token.size()) == token) {
            pos += token.size();
            return true;
        }
        return false;
    }
    void expect(std::string_view token) {
        if (!consume(token)) fail("expected '" + std::string(token) + "'");
    }
    std::string_view identifier() {
        skip_ws();
        const auto start = pos;
        if (pos >= text.size() || !is_ident_start(text[pos])) fail("expected a species name");
        while (pos < text.size() && is_ident_char(text[pos])) ++pos;
        return text.substr(start, pos - start);
    }
    bool peek_digit() {
        skip_ws();
        return pos < text.size() && text[pos] >= '0' && text[pos] <= '9';
    }
    long long integer() {
        skip_ws();
        long long v = 0;
        const auto* first = text.data() + pos;
        auto [ptr, ec] = std::from_chars(first, text.data() + text.size(), v);
        if (ec != std::errc() || ptr == first) fail("expected an integer");
        pos += static_cast<std::size_t>(ptr - first);
        return v;
    }
    double number() {
        skip_ws();
        double v = 0;
        const auto* first = text.data() + pos;
        if (pos < text.size() && text[pos] == '+') ++first;
        auto [ptr, ec] = std::from_chars(first, text.data() + text.size(), v);
        if (ec != std::errc() || ptr == first) fail("expected a number");
        pos = static_cast<std::size_t>(ptr - text.data());
        return v;
    }
};

struct RawTerm {
    std::string name;
    int count;
    std::size_t line, column;
};

struct RawReaction {
    std::vector<RawTerm> lhs, rhs;
    PropensityKind propensity;
    std::size_t line, column;
};

std::vector<RawTerm> parse_side(Cursor& c) {
    std::vector<RawTerm> terms;
    if (c.peek() == '0') {
        const auto save = c.pos;
        c.integer();
        if (c.at_end() || c.peek() == '-' || c.peek() == '@') return terms;
        c.pos = save;
    }
    while (true) {
        int count = 1;
        if (c.peek_digit()) {
            const auto v = c.integer();
            if (v <= 0 || v > 1000) c.fail("stoichiometric count must be a positive integer");
            count = static_cast<int>(v);
        }
        const auto name_col = (c.skip_ws(), c.column());
        terms.push_back({std::string(c.identifier()), count, c.line, name_col});
        if (!c.consume("+")) break;
    }
    return terms;
}

RawReaction parse_reaction(Cursor& c) {
    RawReaction r;
    r.line = c.line;
    r.column = (c.skip_ws(), c.column());
    r.lhs = parse_side(c);
    c.expect("->");
    r.rhs = parse_side(c);
    c.expect("@");
    c.skip_ws();
    const auto rate_col = c.column();
    if (c.consume("mm")) {
        c.expect("(");
        const double vmax = c.number();
        c.expect(",");
        const double km = c.number();
        c.expect(")");
        if (!positive_finite(vmax) || !positive_finite(km))
            throw ParseError(c.line, rate_col, "nonpositive rate");
        r.propensity = MichaelisMenten{vmax, km};
    } else {
        const double k = c.number();
        if (!positive_finite(k)) throw ParseError(c.line, rate_col, "nonpositive rate");
        r.propensity = MassAction{k};
    }
    if (!c.at_end()) c.fail("unexpected trailing text");
    return r;
}

}  // namespace

ReactionNetwork parse_network(std::string_view text) {
    std::vector<std::string> species;
    std::unordered_map<std::string, std::size_t> species_ids;
    bool have_species = false;
    std::vector<RawReaction> raw_reactions;
    std::vector<RawTerm> raw_init;
    bool have_init = false;
    std::size_t line_no = 0;

    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        ++line_no;
        auto line = text.substr(start, end - start);
        if (const auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        start = end + 1;

        Cursor c{line, 0, line_no, 1};
        if (c.at_end()) {
            if (end == text.size()) break;
            continue;
        }
        c.skip_ws();
        const auto key_col = c.column();
        const auto key = c.identifier();
        c.expect(":");
        if (key == "species") {
            if (have_species) throw ParseError(line_no, key_col, "duplicate species line");
            have_species = true;
            while (!c.at_end()) {
                const auto col = c.column();
                std::string name(c.identifier());
                if (species_ids.count(name))
                    throw ParseError(line_no, col, "duplicate species '" + name + "'");
                species_ids.emplace(name, species.size());
                species.push_back(std::move(name));
            }
        } else if (key == "reaction") {
            raw_reactions.push_back(parse_reaction(c));
        } else if (key == "init") {
            if (have_init) throw ParseError(line_no, key_col, "duplicate init line");
            have_init = true;
            while (!c.at_end()) {
                const auto col = c.column();
                std::string name(c.identifier());
                c.expect("=");
                const auto v = c.integer();
                if (v < 0 || v > 1'000'000'000)
                    throw ParseError(line_no, col, "initial count out of range");
                raw_init.push_back({std::move(name), static_cast<int>(v), line_no, col});
            }
        } else {
            throw ParseError(line_no, key_col, "unknown directive '" + std::string(key) + "'");
        }
        if (end == text.size()) break;
    }

    if (!have_init) throw ParseError(line_no + 1, 1, "missing init line");

    auto resolve = [&](const RawTerm& t) {
        auto it = species_ids.find(t.name);
        if (it == species_ids.end())
            throw ParseError(t.line, t.column, "unknown species '" + t.name + "'");
        return it->second;
    };

    std::vector<Reaction> reactions;
    for (const auto& rr : raw_reactions) {
        Reaction r;
        r.propensity = rr.propensity;
        auto convert = [&](const std::vector<RawTerm>& side, std::vector<StoichTerm>& out) {
            std::set<std::size_t> seen;
            for (const auto& t : side) {
                const auto id = resolve(t);
                if (!seen.insert(id).second)
                    throw ParseError(t.line, t.column,
                                     "species '" + t.name + "' appears twice on one side");
                out.push_back({id, t.count});
            }
        };
        convert(rr.lhs, r.reactants);
        convert(rr.rhs, r.products);
        if (std::holds_alternative<MassAction>(r.propensity) && r.order() > 2)
            throw ParseError(rr.line, rr.column, "reactant order > 2 is not supported");
        if (std::holds_alternative<MichaelisMenten>(r.propensity) &&
            (r.reactants.size() != 1 || r.reactants.front().count != 1))
            throw ParseError(rr.line, rr.column,
                             "Michaelis-Menten reactions need exactly one reactant molecule");
        reactions.push_back(std::move(r));
    }

    Population init(species.size(), 0);
    std::set<std::size_t> assigned;
    for (const auto& t : raw_init) {
        const auto id = resolve(t);
        if (!assigned.insert(id).second)
            throw ParseError(t.line, t.column, "species '" + t.name + "' initialised twice");
        init[id] = t.count;
    }

    try {
        return ReactionNetwork(std::move(species), std::move(reactions), std::move(init));
    } catch (const NetworkError& e) {
        throw ParseError(line_no, 1, e.what());
    }
}

ReactionNetwork load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open network file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_network(ss.str());
}

std::string serialize_network(const ReactionNetwork& network) {
    std::ostringstream out;
    const auto& sp = network.species();
    out << "species:";
    for (const auto& s : sp) out << ' ' << s.name;
    out << '\n';

    auto side = [&](const std::vector<StoichTerm>& terms) {
        if (terms.empty()) return std::string("0");
        std::string s;
        for (std::size_t i = 0; i < terms.size(); ++i) {
            if (i) s += " + ";
            if (terms[i].count != 1) s += std::to_string(terms[i].count) + " ";
            s += sp[terms[i].species].name;
        }
        return s;
    };

    for (const auto& r : network.reactions()) {
        out << "reaction: " << side(r.reactants) << " -> " << side(r.products) << " @ ";
        if (const auto* mm = std::get_if<MichaelisMenten>(&r.propensity)) {
            out << "mm(" << format_double(mm->vmax) << ", " << format_double(mm->km) << ")";
        } else {
            out << format_double(std::get<MassAction>(r.propensity).rate);
        }
        out << '\n';
    }

    out << "init:";
    for (const auto& s : sp) out << ' ' << s.name << '=' << network.initial_state()[s.index];
    out << '\n';
    return out.str();
}

}  // namespace cmebal
