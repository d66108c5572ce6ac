#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>

namespace qtd {

/// Input outside an operation's declared domain.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical kernel failed (non-convergence, non-PSD input, ...).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Probability mass lost to a Fock cutoff exceeded the allowed budget.
class TruncationError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Eigenvalues too close for first-order perturbation theory.
class DegenerateSpectrum : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Constraint Jacobian lost row rank.
class RankDeficient : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// No sign change of the bisection indicator inside the bracket.
class BracketError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reading or writing an artifact failed, or its content is malformed.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using WarningHandler = std::function<void(const std::string&)>;

namespace detail {

inline std::mutex& warning_mutex()
{
    static std::mutex m;
    return m;
}

inline WarningHandler& warning_handler()
{
    static WarningHandler h = [](const std::string& msg) { std::cerr << "qtd: warning: " << msg << '\n'; };
    return h;
}

} // namespace detail

/// Replace the process-wide warning sink. Returns the previous one.
inline WarningHandler set_warning_handler(WarningHandler handler)
{
    std::lock_guard lock(detail::warning_mutex());
    return std::exchange(detail::warning_handler(), std::move(handler));
}

inline void warn(const std::string& msg)
{
    std::lock_guard lock(detail::warning_mutex());
    if (detail::warning_handler())
        detail::warning_handler()(msg);
}

/// Installs a handler for the lifetime of the guard.
class ScopedWarningHandler {
public:
    explicit ScopedWarningHandler(WarningHandler h) : prev_(set_warning_handler(std::move(h))) {}
    ~ScopedWarningHandler() { set_warning_handler(std::move(prev_)); }
    ScopedWarningHandler(const ScopedWarningHandler&) = delete;
    ScopedWarningHandler& operator=(const ScopedWarningHandler&) = delete;

private:
    WarningHandler prev_;
};

} // namespace qtd
