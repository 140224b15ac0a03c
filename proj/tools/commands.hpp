#pragma once

#include "ncodec/error.hpp"

namespace ncodec::cli {

// 0 ok, 2 config, 3 prerequisite, 4 compatibility, 5 corrupt, 1 other.
int exit_code(ErrorKind kind);

int run(int argc, char** argv);

}  // namespace ncodec::cli
