#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace cmebal {

/// Molecule counts, one entry per species.
using Population = std::vector<int>;

struct Species {
    std::string name;
    std::size_t index = 0;
};

/// Mass-action kinetics; units s^-1 for orders 0/1, (molecules s)^-1 for order 2.
struct MassAction {
    double rate = 0.0;
};

/// vmax in molecules/s, km in molecules.
struct MichaelisMenten {
    double vmax = 0.0;
    double km = 0.0;
};

using PropensityKind = std::variant<MassAction, MichaelisMenten>;

struct StoichTerm {
    std::size_t species = 0;
    int count = 0;
};

struct Reaction {
    std::vector<StoichTerm> reactants;
    std::vector<StoichTerm> products;
    PropensityKind propensity;

    int order() const;
};

/// Reported by parse_network with a 1-based line and column.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, std::size_t column, const std::string& what);

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

/// A network that violates a structural invariant.
class NetworkError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/**
 * Species, reactions and the initial population.
 *
 * Immutable after construction. The constructor enforces every invariant
 * (unique names, positive finite rates, reactant order <= 2, single-reactant
 * Michaelis-Menten, non-negative initial counts) and throws NetworkError.
 */
class ReactionNetwork {
public:
    ReactionNetwork(std::vector<std::string> species_names, std::vector<Reaction> reactions,
                    Population initial_state);

    const std::vector<Species>& species() const noexcept { return species_; }
    const std::vector<Reaction>& reactions() const noexcept { return reactions_; }
    const Population& initial_state() const noexcept { return initial_state_; }

    std::size_t species_count() const noexcept { return species_.size(); }
    std::size_t reaction_count() const noexcept { return reactions_.size(); }

    std::optional<std::size_t> species_index(std::string_view name) const;

    /// Copy with a different initial population.
    ReactionNetwork with_initial_state(Population state) const;

private:
    std::vector<Species> species_;
    std::vector<Reaction> reactions_;
    Population initial_state_;
};

/// n x m matrix with entries product count minus reactant count.
using StoichMatrix = Eigen::MatrixXi;

StoichMatrix stoichiometry(const ReactionNetwork& network);

/// Jump vector of one reaction, length n.
Population jump_vector(const Reaction& reaction, std::size_t species_count);

/// Rate of `reaction` at `state` in s^-1. Zero when a reactant is missing.
double propensity(const Reaction& reaction, std::span<const int> state);

ReactionNetwork parse_network(std::string_view text);
ReactionNetwork load_network(const std::string& path);

/// Canonical text form; parse_network(serialize_network(n)) reproduces n.
std::string serialize_network(const ReactionNetwork& network);

}  // namespace cmebal
