#include "msgca/cli.hpp"

int main(int argc, char** argv) { return msgca::cli::run_command(argc, argv); }
