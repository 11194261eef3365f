#include "../src/cli/commands.hpp"

int main(int argc, char** argv) { return qcalib::cli::run(argc, argv); }
