#include "protosure/cli.hpp"

int main(int argc, char** argv) { return protosure::run_cli(argc, argv); }
