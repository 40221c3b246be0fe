#pragma once

// Exception hierarchy shared by all bkrc modules. //

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bkrc {

/// Base class of every error raised by the library.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the documented domain (bad parameter, invalid config value).
class invalid_argument : public error {
public:
    using error::error;
};

/// Incompatible shapes or vector lengths.
class dimension_error : public error {
public:
    using error::error;
};

/// A numerical integration produced NaN or Inf.
class blow_up_error : public error {
public:
    blow_up_error(const std::string& what, std::size_t step)
      : error{what + " (step " + std::to_string(step) + ")"}, step_{step}
    {
    }

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// Unregularized ridge system without a unique solution.
class singular_system_error : public error {
public:
    using error::error;
};

/// Iterative method hit its iteration cap.
class convergence_error : public error {
public:
    using error::error;
};

/// A random draw produced a degenerate object; reseed and retry.
class degenerate_draw_error : public error {
public:
    using error::error;
};

/// Not enough samples for the requested layout.
class insufficient_data_error : public error {
public:
    insufficient_data_error(std::size_t required, std::size_t available)
      : error{"insufficient data: " + std::to_string(required) + " steps required, "
              + std::to_string(available) + " available (short by "
              + std::to_string(required > available ? required - available : 0) + ")"}
      , required_{required}
      , available_{available}
    {
    }

    std::size_t required() const noexcept { return required_; }
    std::size_t available() const noexcept { return available_; }

private:
    std::size_t required_;
    std::size_t available_;
};

/// File system or format failure.
class io_error : public error {
public:
    using error::error;
};

}  // namespace bkrc
