#include "fairij/cli.hpp"

int main(int argc, char** argv) { return fairij::run_cli(argc, argv); }
