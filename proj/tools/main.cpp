#include "aries/cli.hpp"

int main(int argc, char** argv) { return aries::cli_main(argc, argv); }
