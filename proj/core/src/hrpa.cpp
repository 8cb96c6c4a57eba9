#include "seps/hrpa.hpp"

#include "seps/ops.hpp"

namespace seps {

AlignmentScore AlignmentVars::values() const {
    return {total.value().item(), mean_p2w.value().item(), head_p2w.value().item(), mean_w2p.value().item(),
            head_w2p.value().item()};
}

Var similarity_matrix(Var patches, Var words) {
    return cosine_matrix(patches, words);
}

PooledTerms relevance_pool(Var similarity, Direction direction, const MlpT<Var>& head) {
    if (head.empty()) throw shape_error("relevance_pool: empty head");
    const Var oriented = direction == Direction::patch_to_word ? similarity : transpose(similarity);
    const Var maxima = row_max_with_arg(oriented).values;
    const std::size_t k = head.front().weight.value().rows();
    const Var top = reshape(topk(maxima, k), {1, k});
    return {mean(maxima), reshape(mlp_forward(head, top), {})};
}

AlignmentVars align_score(Var patches, Var words, const MlpT<Var>& head_p2w, const MlpT<Var>& head_w2p) {
    const Var a = similarity_matrix(patches, words);
    const PooledTerms p2w = relevance_pool(a, Direction::patch_to_word, head_p2w);
    const PooledTerms w2p = relevance_pool(a, Direction::word_to_patch, head_w2p);
    AlignmentVars out{Var{}, p2w.mean, p2w.head, w2p.mean, w2p.head};
    out.total = add(add(add(p2w.mean, p2w.head), w2p.mean), w2p.head);
    return out;
}

}  // namespace seps
