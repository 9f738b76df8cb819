#include "bevbridge/cli.hpp"

int main(int argc, char** argv) { return bevbridge::run_cli(argc, argv); }
