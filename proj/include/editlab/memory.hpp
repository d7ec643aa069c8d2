#pragma once

#include "editlab/linalg.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace editlab {

// Linear associative memory standing in for an edited MLP output projection:
// a d_v x d_k map from subject keys to value activations. Value-semantic;
// applying an edit produces a new memory.
struct AssociativeMemory {
    DenseMatrix weights; // d_v x d_k

    std::size_t key_dim() const { return weights.cols(); }
    std::size_t value_dim() const { return weights.rows(); }
};

// Per-relation linear readout: softmax(e * value) yields token probabilities.
struct RelationReadout {
    std::string relation_id;
    DenseMatrix e; // vocab x d_v

    std::size_t vocab() const { return e.rows(); }
    std::size_t value_dim() const { return e.cols(); }
};

// One alternative linguistic form of a fact: its key, a seed for the matched
// downstream perturbation, and the key's cosine to the canonical form.
struct PromptVariant {
    DenseVector key;
    std::uint64_t readout_perturbation_seed = 0;
    double recorded_cosine = 1.0;
};

struct EditRequest {
    std::string subject_id;
    std::string relation_id;
    DenseVector key; // canonical declarative key
    std::size_t target_token = 0;
    std::vector<PromptVariant> variants;
};

struct Prediction {
    std::vector<double> probs;
    std::size_t argmax = 0;
};

DenseVector forward(const AssociativeMemory& m, const DenseVector& key);

// Max-logit-stabilized softmax; argmax ties break toward the lowest index.
Prediction predict(const RelationReadout& r, const DenseVector& value);

double nll_loss(const RelationReadout& r, const DenseVector& value, std::size_t target);

// Gradient of nll_loss in value space: E^T (softmax(E v) - onehot(target)).
DenseVector value_gradient(const RelationReadout& r, const DenseVector& value, std::size_t target);

// Readout with a seeded multiplicative perturbation E (I + strength * M),
// M gaussian with entries scaled by 1/sqrt(d_v). strength = 0 is the
// identity; identical (seed, strength) always reproduces the same readout.
RelationReadout perturbed_readout(const RelationReadout& r, const PromptVariant& variant,
                                  double strength);

} // namespace editlab
