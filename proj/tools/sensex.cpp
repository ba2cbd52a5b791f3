#include "sensex/cli.hpp"

int main(int argc, char** argv) { return sensex::cli::run(argc, argv); }
