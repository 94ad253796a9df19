#pragma once

#include <span>

#include "startrack/geometry.hpp"

namespace startrack {

/// Rotation R minimizing sum_p w_p ||observed_p - R reference_p||^2, via the
/// SVD of B = sum_p w_p observed_p reference_p^T:
/// R = U diag(1, 1, det(U V^T)) V^T.
/// Throws kDegenerate when fewer than two pairs are given or rank(B) < 2.
Rotation solve_wahba(std::span<const Vec3> observed, std::span<const Vec3> reference,
                     std::span<const double> weights = {});

/// The weighted Wahba objective at `r`.
double wahba_cost(const Rotation& r, std::span<const Vec3> observed, std::span<const Vec3> reference,
                  std::span<const double> weights = {});

}  // namespace startrack
