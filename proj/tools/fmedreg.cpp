#include "fmedreg/cli.hpp"

int main(int argc, char** argv) { return fmedreg::cli_main(argc, argv); }
