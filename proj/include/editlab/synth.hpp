#pragma once

#include "editlab/editors.hpp"
#include "editlab/linalg.hpp"

#include <cstdint>
#include <vector>

namespace editlab {

// Power-law eigenspectrum lambda_i = lambda_max * i^(-decay), floored at
// lambda_max / condition_cap.
struct SpectrumSpec {
    std::size_t d = 0; // 0 = inherit the suite's key dimension
    double lambda_max = 1.0;
    double decay = 2.0;
    double condition_cap = 1e4;
};

enum class KeyMode { gaussian, orthogonalized };

struct SynthConfig {
    std::size_t d_k = 512;
    std::size_t d_v = 64;
    std::size_t vocab = 50;
    std::size_t n_subjects = 50;
    std::size_t relations_per_subject = 4;
    std::size_t variants_per_fact = 8;
    double variant_cosine = 0.9;
    KeyMode key_mode = KeyMode::gaussian;
    SpectrumSpec spectrum;
    double variant_strength = 0.05;
    std::uint64_t seed = 0;
};

struct SynthSuite {
    AssociativeMemory memory;
    std::vector<SubjectGroup> groups;
    DenseMatrix covariance;
    std::vector<DenseVector> holdout_keys; // never edited; locality probes
};

// Subject keys at norm sqrt(d). gaussian: i.i.d. unit-variance entries,
// normalized. orthogonalized: additionally Gram-Schmidt'ed pairwise.
std::vector<DenseVector> gen_subject_keys(std::size_t n, std::size_t d, KeyMode mode,
                                          std::uint64_t seed);

// A key at a prescribed cosine to the canonical one, same norm. target_cos = 1
// returns the canonical key itself.
DenseVector gen_prompt_variant_key(const DenseVector& k_o, double target_cos, std::uint64_t seed);

DenseMatrix gen_anisotropic_covariance(const SpectrumSpec& spec, std::uint64_t seed);

// Rows of the generated readouts sit at norm ~3: wide enough that the default
// optimizer clears the convergence threshold inside its step budget.
inline constexpr double kReadoutRowNorm = 6.0;

SynthSuite gen_suite(const SynthConfig& cfg);

} // namespace editlab
