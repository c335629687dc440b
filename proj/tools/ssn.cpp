#include "cli.hpp"

int main(int argc, char** argv) { return ssn::cli::run_cli(argc, argv); }
