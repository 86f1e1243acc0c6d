#pragma once

#include "promptcount/scene.hpp"

#include <random>
#include <vector>

namespace pc {

// One contrastive pairing: sample i (positive) width-concatenated with a
// partner j != i whose half of the mask and target is all zero. Images stay
// separate; features are concatenated after encoding, matching the training
// scheme.
struct ContrastiveItem {
    int i = 0, j = 0;
    const Tensor* image_a = nullptr;
    const Tensor* image_b = nullptr;
    Tensor mask;     // (h, 2w): [m_i, 0]
    Tensor target;   // (h, 2w): [d'_i, 0]
    int gt_count = 0;
};

// Pairs every sample in the batch with a uniformly drawn other sample. No
// category information is consulted. Throws on batches smaller than 2.
std::vector<ContrastiveItem> make_contrastive_batch(const std::vector<const TrainingSample*>& batch,
                                                    std::mt19937_64& rng);

}  // namespace pc
