#include "efm/cli.hpp"

int main(int argc, char** argv) { return efm::cli_main(argc, argv); }
