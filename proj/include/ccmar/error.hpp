#pragma once

#include <stdexcept>
#include <string>

namespace ccmar {

// Base class for everything thrown by this library.
struct ccmar_error : std::runtime_error {
    explicit ccmar_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user-supplied configuration: unknown keys, illegal term lists,
// malformed scenario files, out-of-range settings.
struct config_error : ccmar_error {
    explicit config_error(const std::string& msg) : ccmar_error(msg) {}
};

// A term references a variable the record schema does not provide.
struct schema_error : ccmar_error {
    explicit schema_error(const std::string& msg) : ccmar_error(msg) {}
};

// A term references a partially missing confounder on a row where it was
// never observed (and has not been imputed).
struct missing_data_error : ccmar_error {
    explicit missing_data_error(const std::string& msg) : ccmar_error(msg) {}
};

// Numerical fitting failure that cannot be expressed as a flag:
// rank-deficient designs, empty estimation subsets, insufficient rows.
struct fit_error : ccmar_error {
    explicit fit_error(const std::string& msg) : ccmar_error(msg) {}
};

// An object was used before it reached the required state (e.g. evaluating
// nuisance functionals before fitting).
struct state_error : ccmar_error {
    explicit state_error(const std::string& msg) : ccmar_error(msg) {}
};

// Inputs outside the mathematical domain of an operation.
struct domain_error : ccmar_error {
    explicit domain_error(const std::string& msg) : ccmar_error(msg) {}
};

}  // namespace ccmar
