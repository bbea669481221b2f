#include "artemis/cli/commands.hpp"

int main(int argc, char** argv) { return artemis::cli::run_cli(argc, argv); }
