#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lmmss {

enum class Errc {
    dimension_mismatch,
    dimension_too_small,
    rank_deficient_l,
    completeness_violated,
    singular_system,
    nonpositive_lambda,
    zero_gradient,
    bracket_failure,
    evaluation_failure,
    negative_delta,
    nonpositive_coefficient,
    degenerate_ball,
    missing_exact_solution,
    invalid_argument,
    io_error,
};

constexpr std::string_view to_string(Errc e) {
    switch (e) {
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::dimension_too_small: return "DimensionTooSmall";
    case Errc::rank_deficient_l: return "RankDeficientL";
    case Errc::completeness_violated: return "CompletenessViolated";
    case Errc::singular_system: return "SingularSystem";
    case Errc::nonpositive_lambda: return "NonpositiveLambda";
    case Errc::zero_gradient: return "ZeroGradient";
    case Errc::bracket_failure: return "BracketFailure";
    case Errc::evaluation_failure: return "EvaluationFailure";
    case Errc::negative_delta: return "NegativeDelta";
    case Errc::nonpositive_coefficient: return "NonpositiveCoefficient";
    case Errc::degenerate_ball: return "DegenerateBall";
    case Errc::missing_exact_solution: return "MissingExactSolution";
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::io_error: return "IoError";
    }
    return "Unknown";
}

/// Library exception. Carries a machine-checkable code and, for errors raised
/// inside the iteration, the index of the offending iterate.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what, std::optional<int> iterate = std::nullopt)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), iterate_(iterate) {}

    Errc code() const noexcept { return code_; }
    std::optional<int> iterate() const noexcept { return iterate_; }

private:
    Errc code_;
    std::optional<int> iterate_;
};

inline void require(bool cond, Errc code, const std::string& what) {
    if (!cond) {
        throw Error(code, what);
    }
}

} // namespace lmmss
