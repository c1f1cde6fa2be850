#include "dgd/cli/app.hpp"

int main(int argc, char** argv) { return dgd::cli::run_cli(argc, argv); }
