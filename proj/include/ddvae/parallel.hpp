#pragma once

namespace ddvae {

/// Selects the serial reference kernel or its OpenMP counterpart. Both paths
/// produce results that agree to rounding; most agree bit-for-bit.
enum class Exec { serial, parallel };

int max_threads();
/// Sets the OpenMP team size for later parallel regions; n <= 0 is ignored.
void set_threads(int n);

}  // namespace ddvae
