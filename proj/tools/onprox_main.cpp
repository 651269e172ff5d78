#include "onprox/experiment.hpp"

int main(int argc, char** argv) { return onprox::cli::run(argc, argv); }
