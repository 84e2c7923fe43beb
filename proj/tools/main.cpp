#include "sonarsweep/cli.hpp"

int main(int argc, char** argv) { return sonarsweep::run_cli(argc, argv); }
