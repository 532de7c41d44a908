#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace textheads {

struct GradCheckEntry {
    std::string name;           // op or architecture under test
    double max_relative_error = 0.0;
    std::string worst_parameter;  // parameter holding the worst coordinate
    std::size_t coordinate = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    bool passed = false;
};

struct GradCheckReport {
    double tolerance = 1e-4;
    std::vector<GradCheckEntry> entries;
    double seconds = 0.0;

    bool passed() const;
};

/// Finite-difference checks for every differentiable op. With
/// `inject_fault` an extra identity op whose backward flips the gradient sign
/// is checked too, so the report must fail.
GradCheckReport run_op_gradchecks(std::uint64_t seed, bool inject_fault = false);

/// Finite-difference checks of all five architectures on a small transformer
/// encoder (D=16, one layer, two heads) with hidden=8, channels=8 and T=12.
GradCheckReport run_model_gradchecks(std::uint64_t seed);

/// One line per entry ("ok" or "FAIL", name, error, worst parameter) and a
/// closing summary line.
std::string format_gradcheck_report(const GradCheckReport& report);

}  // namespace textheads
