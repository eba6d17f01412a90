#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

namespace mam {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

/// Input that fails a documented invariant (bad config, bad data, bad arguments).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical procedure that did not converge or hit a singular system.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file; `line()` is 1-based, 0 when not tied to a line.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error(what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Number of workers to use when the caller passes 0: MAM_THREADS if set, else hardware.
unsigned resolve_threads(unsigned requested);

/// Runs fn(i) for i in [0, n). Each index is written by exactly one worker, so callers
/// that store per-index results get identical output for any thread count.
void parallel_for(Index n, unsigned threads, const std::function<void(Index)>& fn);

inline constexpr double kTwoPi = 6.283185307179586476925286766559;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;
inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

}  // namespace mam
