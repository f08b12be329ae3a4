#include "cmebal/statespace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

namespace cmebal {

std::size_t PopulationHash::operator()(const Population& p) const noexcept {
    std::size_t h = 0xcbf29ce484222325ULL;
    for (int v : p) {
        h ^= static_cast<std::size_t>(static_cast<unsigned>(v));
        h *= 0x100000001b3ULL;
    }
    return h;
}

StateSpace::StateSpace(std::vector<Population> states) : states_(std::move(states)) {
    if (!states_.empty()) species_count_ = states_.front().size();
    index_.reserve(states_.size());
    for (std::size_t i = 0; i < states_.size(); ++i) {
        if (states_[i].size() != species_count_)
            throw std::invalid_argument("state vectors must all have the same length");
        if (!index_.emplace(states_[i], i).second)
            throw std::invalid_argument("duplicate state in state space");
    }
}

std::optional<std::size_t> StateSpace::index(const Population& p) const {
    auto it = index_.find(p);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

namespace {

struct Move {
    const Reaction* reaction;
    Population jump;
};

std::vector<Move> moves_of(const ReactionNetwork& network) {
    std::vector<Move> moves;
    for (const auto& r : network.reactions()) {
        auto jump = jump_vector(r, network.species_count());
        if (std::all_of(jump.begin(), jump.end(), [](int v) { return v == 0; })) continue;
        moves.push_back({&r, std::move(jump)});
    }
    return moves;
}

bool admissible(const Population& p, const std::vector<int>& cap) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] < 0) return false;
        if (!cap.empty() && p[i] > cap[i]) return false;
    }
    return true;
}

StateSpace bfs(const ReactionNetwork& network, std::vector<Population> seeds,
               std::size_t max_levels, const EnumerateOptions& options) {
    if (!options.cap.empty() && options.cap.size() != network.species_count())
        throw std::invalid_argument("cap length does not match species count");
    const auto moves = moves_of(network);

    std::vector<Population> states;
    std::unordered_map<Population, std::size_t, PopulationHash> seen;
    std::vector<Population> frontier;
    for (auto& s : seeds) {
        if (!admissible(s, options.cap))
            throw std::invalid_argument("seed state lies outside the admissible region");
        if (seen.emplace(s, states.size()).second) {
            states.push_back(s);
            frontier.push_back(std::move(s));
        }
    }

    for (std::size_t level = 0; level < max_levels && !frontier.empty(); ++level) {
        std::vector<Population> next;
        for (const auto& s : frontier) {
            for (const auto& m : moves) {
                if (propensity(*m.reaction, s) <= 0.0) continue;
                Population t = s;
                for (std::size_t i = 0; i < t.size(); ++i) t[i] += m.jump[i];
                if (!admissible(t, options.cap)) continue;
                if (seen.emplace(t, states.size() + next.size()).second) next.push_back(std::move(t));
            }
        }
        std::sort(next.begin(), next.end());
        for (std::size_t i = 0; i < next.size(); ++i) seen[next[i]] = states.size() + i;
        if (states.size() + next.size() > options.max_states) {
            throw StateExplosion("state count exceeds limit of " +
                                 std::to_string(options.max_states) +
                                 "; supply a cap or use FSP truncation");
        }
        states.insert(states.end(), next.begin(), next.end());
        frontier = std::move(next);
    }
    return StateSpace(std::move(states));
}

}  // namespace

StateSpace enumerate_states(const ReactionNetwork& network, const EnumerateOptions& options) {
    return bfs(network, {network.initial_state()}, static_cast<std::size_t>(-1), options);
}

StateSpace enumerate_ball(const ReactionNetwork& network, const std::vector<Population>& seeds,
                          std::size_t radius, const EnumerateOptions& options) {
    return bfs(network, seeds, radius, options);
}

Generator build_generator(const ReactionNetwork& network, std::shared_ptr<const StateSpace> space,
                          Boundary boundary) {
    if (!space) throw std::invalid_argument("build_generator: null state space");
    if (space->species_count() != network.species_count() && space->size() > 0)
        throw std::invalid_argument("state space does not match the network's species");
    const auto moves = moves_of(network);
    const auto w = space->size();

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(w * (moves.size() + 1));
    Population target;
    for (std::size_t i = 0; i < w; ++i) {
        const auto& s = space->state(i);
        double outflow = 0.0;
        for (const auto& m : moves) {
            const double a = propensity(*m.reaction, s);
            if (a <= 0.0) continue;
            target = s;
            for (std::size_t c = 0; c < target.size(); ++c) target[c] += m.jump[c];
            if (auto j = space->index(target)) {
                triplets.emplace_back(static_cast<int>(*j), static_cast<int>(i), a);
                outflow += a;
            } else if (boundary == Boundary::Absorbing) {
                outflow += a;
            }
        }
        if (outflow != 0.0) triplets.emplace_back(static_cast<int>(i), static_cast<int>(i), -outflow);
    }

    Generator g;
    g.matrix.resize(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(w));
    g.matrix.setFromTriplets(triplets.begin(), triplets.end());
    g.matrix.makeCompressed();
    g.space = std::move(space);
    g.boundary = boundary;
    return g;
}

double max_relative_column_sum(const SparseMatrix& a) {
    double worst_sum = 0.0;
    double scale = 0.0;
    for (Eigen::Index j = 0; j < a.outerSize(); ++j) {
        double sum = 0.0;
        for (SparseMatrix::InnerIterator it(a, j); it; ++it) {
            sum += it.value();
            scale = std::max(scale, std::abs(it.value()));
        }
        worst_sum = std::max(worst_sum, std::abs(sum));
    }
    return scale > 0.0 ? worst_sum / scale : 0.0;
}

std::size_t count_closed_classes(const SparseMatrix& a) {
    // Tarjan SCC on the transition digraph i -> j for A(j, i) > 0, i != j.
    const auto n = static_cast<std::size_t>(a.cols());
    std::vector<std::vector<std::size_t>> succ(n);
    for (Eigen::Index i = 0; i < a.outerSize(); ++i)
        for (SparseMatrix::InnerIterator it(a, i); it; ++it)
            if (it.row() != it.col() && it.value() > 0.0)
                succ[static_cast<std::size_t>(i)].push_back(static_cast<std::size_t>(it.row()));

    constexpr auto unset = static_cast<std::size_t>(-1);
    std::vector<std::size_t> index(n, unset), low(n, 0), comp(n, unset);
    std::vector<char> on_stack(n, 0);
    std::vector<std::size_t> stack;
    std::size_t counter = 0, ncomp = 0;

    // Iterative to survive chains with ~10^5 states.
    struct Frame {
        std::size_t v;
        std::size_t edge;
    };
    for (std::size_t root = 0; root < n; ++root) {
        if (index[root] != unset) continue;
        std::vector<Frame> call{{root, 0}};
        index[root] = low[root] = counter++;
        stack.push_back(root);
        on_stack[root] = 1;
        while (!call.empty()) {
            auto& f = call.back();
            if (f.edge < succ[f.v].size()) {
                const auto w = succ[f.v][f.edge++];
                if (index[w] == unset) {
                    index[w] = low[w] = counter++;
                    stack.push_back(w);
                    on_stack[w] = 1;
                    call.push_back({w, 0});
                } else if (on_stack[w]) {
                    low[f.v] = std::min(low[f.v], index[w]);
                }
            } else {
                const auto v = f.v;
                if (low[v] == index[v]) {
                    std::size_t w;
                    do {
                        w = stack.back();
                        stack.pop_back();
                        on_stack[w] = 0;
                        comp[w] = ncomp;
                    } while (w != v);
                    ++ncomp;
                }
                call.pop_back();
                if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
            }
        }
    }

    std::vector<char> closed(ncomp, 1);
    for (std::size_t v = 0; v < n; ++v)
        for (auto w : succ[v])
            if (comp[w] != comp[v]) closed[comp[v]] = 0;
    return static_cast<std::size_t>(std::count(closed.begin(), closed.end(), 1));
}

// ---------------------------------------------------------------------------

namespace {

bool matches(const StatePredicate& pred, const Population& s) {
    if (const auto* single = std::get_if<SingleState>(&pred)) return single->state == s;
    const auto& range = std::get<CountRange>(pred);
    const int v = s[range.species];
    return v >= range.lo && v <= range.hi;
}

void check_predicate(const StatePredicate& pred, std::size_t n) {
    if (const auto* single = std::get_if<SingleState>(&pred)) {
        if (single->state.size() != n)
            throw std::invalid_argument("state selector has the wrong number of species");
    } else {
        const auto& range = std::get<CountRange>(pred);
        if (range.species >= n) throw std::invalid_argument("range selector: species out of range");
        if (range.lo > range.hi) throw std::invalid_argument("range selector: lo > hi");
    }
}

std::string describe(const OutputRow& row, std::size_t r) {
    if (const auto* single = std::get_if<SingleState>(&row)) {
        std::string s = "state(";
        for (std::size_t i = 0; i < single->state.size(); ++i) {
            if (i) s += ' ';
            s += std::to_string(single->state[i]);
        }
        return s + ")";
    }
    if (const auto* range = std::get_if<CountRange>(&row)) {
        return "range(" + std::to_string(range->species) + ":" + std::to_string(range->lo) + "-" +
               std::to_string(range->hi) + ")";
    }
    return "y" + std::to_string(r + 1);
}

}  // namespace

OutputMatrix build_output(const OutputSelector& selector, const StateSpace& space) {
    const auto n = space.species_count();
    const auto r = selector.rows.size();
    OutputMatrix out;
    out.matrix = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(space.size()));

    for (std::size_t row = 0; row < r; ++row) {
        const auto& spec = selector.rows[row];
        bool any = false;
        auto fill = [&](const StatePredicate& pred, double weight) {
            check_predicate(pred, n);
            if (const auto* single = std::get_if<SingleState>(&pred)) {
                if (auto i = space.index(single->state)) {
                    out.matrix(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(*i)) += weight;
                    any = true;
                }
                return;
            }
            for (std::size_t i = 0; i < space.size(); ++i) {
                if (matches(pred, space.state(i))) {
                    out.matrix(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(i)) += weight;
                    any = true;
                }
            }
        };
        if (const auto* single = std::get_if<SingleState>(&spec)) {
            fill(*single, 1.0);
        } else if (const auto* range = std::get_if<CountRange>(&spec)) {
            fill(*range, 1.0);
        } else {
            for (const auto& [pred, weight] : std::get<WeightedSum>(spec).terms) fill(pred, weight);
        }
        if (!any) out.empty_rows.push_back(row);
        out.labels.push_back(row < selector.labels.size() ? selector.labels[row] : describe(spec, row));
    }
    return out;
}

OutputRow parse_selector_row(const std::string& spec, const ReactionNetwork& network) {
    std::istringstream in(spec);
    std::string kind;
    in >> kind;
    auto species_id = [&](const std::string& name) {
        auto id = network.species_index(name);
        if (!id) throw std::invalid_argument("selector: unknown species '" + name + "'");
        return *id;
    };
    if (kind == "state") {
        Population state(network.species_count(), 0);
        std::string item;
        while (in >> item) {
            const auto eq = item.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("selector: expected NAME=COUNT, got '" + item + "'");
            const auto id = species_id(item.substr(0, eq));
            try {
                state[id] = std::stoi(item.substr(eq + 1));
            } catch (const std::exception&) {
                throw std::invalid_argument("selector: bad count in '" + item + "'");
            }
        }
        return SingleState{std::move(state)};
    }
    if (kind == "range") {
        std::string name;
        long lo = 0, hi = 0;
        if (!(in >> name >> lo >> hi))
            throw std::invalid_argument("selector: expected 'range NAME LO HI'");
        std::string extra;
        if (in >> extra) throw std::invalid_argument("selector: trailing text '" + extra + "'");
        if (lo > hi) throw std::invalid_argument("selector: range lo > hi");
        return CountRange{species_id(name), static_cast<int>(lo), static_cast<int>(hi)};
    }
    throw std::invalid_argument("selector: expected 'state ...' or 'range ...', got '" + spec + "'");
}

void write_matrix_market(std::ostream& out, const SparseMatrix& a) {
    out << "%%MatrixMarket matrix coordinate real general\n";
    out << a.rows() << ' ' << a.cols() << ' ' << a.nonZeros() << '\n';
    char buf[64];
    for (Eigen::Index j = 0; j < a.outerSize(); ++j) {
        for (SparseMatrix::InnerIterator it(a, j); it; ++it) {
            std::snprintf(buf, sizeof buf, "%.17g", it.value());
            out << (it.row() + 1) << ' ' << (it.col() + 1) << ' ' << buf << '\n';
        }
    }
}

void write_states_csv(std::ostream& out, const StateSpace& space, const ReactionNetwork& network) {
    out << "ordinal";
    for (const auto& s : network.species()) out << ',' << s.name;
    out << '\n';
    for (std::size_t i = 0; i < space.size(); ++i) {
        out << (i + 1);
        for (int v : space.state(i)) out << ',' << v;
        out << '\n';
    }
}

}  // namespace cmebal
