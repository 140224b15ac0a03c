#include "commands.hpp"

int main(int argc, char** argv) { return ncodec::cli::run(argc, argv); }
