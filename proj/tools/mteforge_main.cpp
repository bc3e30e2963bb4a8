#include "mteforge/app.hpp"

int main(int argc, char** argv) { return mteforge::app::run_cli(argc, argv); }
