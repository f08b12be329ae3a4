#pragma once

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "cmebal/network.hpp"

namespace cmebal {

struct PopulationHash {
    std::size_t operator()(const Population& p) const noexcept;
};

/// Thrown when enumeration exceeds the configured state limit.
class StateExplosion : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/**
 * Ordered set of reachable population vectors.
 *
 * Ordinals are 0-based in the API (the initial state is ordinal 0); exported
 * CSV files use 1-based ordinals.
 */
class StateSpace {
public:
    explicit StateSpace(std::vector<Population> states);

    std::size_t size() const noexcept { return states_.size(); }
    std::size_t species_count() const noexcept { return species_count_; }
    const Population& state(std::size_t i) const { return states_.at(i); }
    const std::vector<Population>& states() const noexcept { return states_; }
    std::optional<std::size_t> index(const Population& p) const;

private:
    std::vector<Population> states_;
    std::unordered_map<Population, std::size_t, PopulationHash> index_;
    std::size_t species_count_ = 0;
};

struct EnumerateOptions {
    /// Per-species inclusive upper bounds; empty means unbounded.
    std::vector<int> cap;
    std::size_t max_states = 200'000;
};

/**
 * Level-synchronous breadth-first closure from the initial state under the
 * reaction jump vectors. Each new BFS level is sorted lexicographically, so
 * the ordering does not depend on reaction declaration order.
 *
 * Only jumps of reactions with nonzero propensity at the source state are
 * followed, so states that cannot actually be reached are never listed.
 */
StateSpace enumerate_states(const ReactionNetwork& network, const EnumerateOptions& options = {});

/// Same closure, limited to `radius` BFS levels from every state in `seeds`.
StateSpace enumerate_ball(const ReactionNetwork& network, const std::vector<Population>& seeds,
                          std::size_t radius, const EnumerateOptions& options = {});

/// How transitions that leave the enumerated set are treated.
enum class Boundary {
    Reflecting,  ///< dropped from off-diagonal and diagonal; columns sum to zero
    Absorbing,   ///< dropped from off-diagonal only; leaked mass is lost (FSP)
};

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;

struct Generator {
    SparseMatrix matrix;
    std::shared_ptr<const StateSpace> space;
    Boundary boundary = Boundary::Reflecting;

    std::size_t size() const noexcept { return static_cast<std::size_t>(matrix.rows()); }
};

Generator build_generator(const ReactionNetwork& network, std::shared_ptr<const StateSpace> space,
                          Boundary boundary = Boundary::Reflecting);

/// Largest |column sum| divided by the largest column magnitude (0 for an all-zero matrix).
double max_relative_column_sum(const SparseMatrix& a);

/// Number of closed communicating classes of the chain whose generator is `a`.
std::size_t count_closed_classes(const SparseMatrix& a);

// ---------------------------------------------------------------------------
// Output selection

struct SingleState {
    Population state;
};

/// lo <= count(species) <= hi, inclusive.
struct CountRange {
    std::size_t species = 0;
    int lo = 0;
    int hi = 0;
};

using StatePredicate = std::variant<SingleState, CountRange>;

struct WeightedSum {
    std::vector<std::pair<StatePredicate, double>> terms;
};

using OutputRow = std::variant<SingleState, CountRange, WeightedSum>;

struct OutputSelector {
    std::vector<OutputRow> rows;
    std::vector<std::string> labels;
};

struct OutputMatrix {
    Eigen::MatrixXd matrix;  // r x w
    std::vector<std::string> labels;
    /// Rows whose predicate matched no state (left as zero rows).
    std::vector<std::size_t> empty_rows;
};

OutputMatrix build_output(const OutputSelector& selector, const StateSpace& space);

/// Parses one selector row: `state S1=0 S2=300` or `range P 0 30`.
OutputRow parse_selector_row(const std::string& spec, const ReactionNetwork& network);

// ---------------------------------------------------------------------------
// Export

/// Matrix Market coordinate real general, 1-based indices.
void write_matrix_market(std::ostream& out, const SparseMatrix& a);
/// CSV with header `ordinal,<species...>`, 1-based ordinals.
void write_states_csv(std::ostream& out, const StateSpace& space, const ReactionNetwork& network);

}  // namespace cmebal
