// Seeded RNG helpers. The engine is std::mt19937_64 (bit-exact across
// platforms); the distributions are hand-rolled because the standard
// distribution adaptors are implementation-defined and would break
// reproducibility of checkpoints and run logs across toolchains.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "openncd/errors.hpp"

namespace openncd {

class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller with a cached spare.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // Unbiased integer in [0, n) by rejection.
    uint64_t below(uint64_t n) {
        if (n == 0) throw ContractViolation("Rng::below: n must be positive");
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return x % n;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Uniform draw on the unit sphere in `dim` dimensions.
    std::vector<double> unit_sphere(int dim) {
        std::vector<double> v(dim);
        double n2 = 0.0;
        do {
            n2 = 0.0;
            for (int i = 0; i < dim; ++i) {
                v[i] = gaussian();
                n2 += v[i] * v[i];
            }
        } while (n2 < 1e-24);
        const double inv = 1.0 / std::sqrt(n2);
        for (double& x : v) x *= inv;
        return v;
    }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace openncd
