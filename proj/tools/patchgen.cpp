#include "patchgen/cli/commands.hpp"

int main(int argc, char** argv) { return patchgen::cli::run_cli(argc, argv); }
