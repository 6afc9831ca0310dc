#include "uqac/pipeline.hpp"

int main(int argc, char** argv) { return uqac::pipeline::run_cli(argc, argv); }
