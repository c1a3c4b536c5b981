#pragma once

// A ReLU input within h of zero makes a central difference straddle the kink.
// Such a coordinate must agree once the step is ten times smaller; a gradient
// bug fails at both steps.

#include <string>
#include <vector>

#include "fra/gradcheck.hpp"

namespace oracle {

inline std::vector<std::string> unresolved_failures(const fra::ad::CheckReport& coarse,
                                                    const fra::ad::CheckReport& fine) {
    std::vector<std::string> out;
    for (const auto& f : coarse.failures) {
        for (const auto& g : fine.failures) {
            if (g.tensor == f.tensor && g.index == f.index) {
                out.push_back(f.tensor + "[" + std::to_string(f.index) + "] analytic " + std::to_string(f.analytic) +
                              " numeric " + std::to_string(f.numeric));
            }
        }
    }
    return out;
}

}  // namespace oracle
