#include "ocbf/cli.hpp"

int main(int argc, char** argv) { return ocbf::cli_main(argc, argv); }
