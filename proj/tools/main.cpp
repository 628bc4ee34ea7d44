#include "proximap/cli.hpp"

int main(int argc, char** argv) { return proximap::cli_main(argc, argv); }
