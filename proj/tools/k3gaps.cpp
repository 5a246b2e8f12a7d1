#include "k3gaps/cli.hpp"

int main(int argc, char** argv) { return k3gaps::cli::run(argc, argv); }
