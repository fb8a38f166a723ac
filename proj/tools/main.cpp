#include "sra_tools/cli.hpp"

int main(int argc, char** argv) { return sra::cli::dispatch(argc, argv); }
