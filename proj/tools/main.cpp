#include "randecon/cli.hpp"

int main(int argc, char** argv) { return randecon::cli_main(argc, argv); }
