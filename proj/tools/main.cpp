#include "spikecomp/cli.hpp"

int main(int argc, char** argv) { return spikecomp::cli_main(argc, argv); }
