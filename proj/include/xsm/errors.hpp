#pragma once

#include <stdexcept>
#include <string>

namespace xsm {

// Error taxonomy. The CLI maps these to exit codes:
//   config_error -> 2, dependency_error -> 3, everything else -> 4.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct dependency_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct dim_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct state_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct degenerate_input_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct parse_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define XSM_CHECK(cond, exc, msg)                                                                  \
    do {                                                                                           \
        if (!(cond)) throw exc(std::string(msg));                                                  \
    } while (0)

}  // namespace xsm
