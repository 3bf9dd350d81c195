#include <kernelbound/cli.hpp>

int main(int argc, char** argv) { return kernelbound::cli::run(argc, argv); }
