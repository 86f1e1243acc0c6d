#include "promptcount/contrastive.hpp"

namespace pc {

namespace {

Tensor concat_width_zero(const Tensor& left) {
    const int h = left.dim(0), w = left.dim(1);
    Tensor out({h, 2 * w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at2(y, x) = left.at2(y, x);
    return out;
}

}  // namespace

std::vector<ContrastiveItem> make_contrastive_batch(const std::vector<const TrainingSample*>& batch,
                                                    std::mt19937_64& rng) {
    const size_t n = batch.size();
    if (n < 2) throw Error("contrastive batch needs at least 2 samples");
    std::vector<ContrastiveItem> items;
    items.reserve(n);
    std::uniform_int_distribution<size_t> pick(0, n - 2);
    for (size_t i = 0; i < n; ++i) {
        size_t j = pick(rng);
        if (j >= i) ++j;  // uniform over {0..n-1} \ {i}
#ifdef PC_DIAG_CLASS_FILTER
        for (int tries = 0; tries < 64 && batch[j]->class_id == batch[i]->class_id; ++tries) {
            j = pick(rng);
            if (j >= i) ++j;
        }
#endif
        ContrastiveItem item;
        item.i = static_cast<int>(i);
        item.j = static_cast<int>(j);
        item.image_a = &batch[i]->image;
        item.image_b = &batch[j]->image;
        item.mask = concat_width_zero(batch[i]->mask);
        item.target = concat_width_zero(batch[i]->gt_density);
        item.gt_count = batch[i]->gt_count;
        items.push_back(std::move(item));
    }
    return items;
}

}  // namespace pc
