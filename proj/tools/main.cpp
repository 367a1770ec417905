#include "cascade/cli.hpp"

int main(int argc, char** argv) { return cascade::run_cli(argc, argv); }
