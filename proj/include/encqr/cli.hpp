#pragma once

namespace encqr::cli {

/// Entry point of the `encqr` tool. Returns 0 on success, 1 on a
/// configuration error and 2 on any other failure.
int main(int argc, char** argv);

}  // namespace encqr::cli
