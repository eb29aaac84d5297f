#pragma once

#include <cstdint>
#include <ostream>
#include <string>

// Oracle suite behind `fewmatch check`: chamfer brute force, exhaustive DTW
// path enumeration, gradient checks, permutation-invariance witnesses.
// Prints one PASS/FAIL line per check plus tested-object counts; returns 0
// when everything passes, 3 otherwise. `fault` = "chamfer-sign" flips the
// sign of one computed chamfer value to prove the harness can fail.
int run_verification_suite(std::ostream& out, const std::string& fault, std::uint64_t seed);
