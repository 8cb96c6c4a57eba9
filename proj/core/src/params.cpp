#include "seps/params.hpp"

#include "seps/ops.hpp"

namespace seps {

namespace {

void check_mlp(const char* name, const MlpT<Tensor>& mlp, std::size_t in, std::size_t out) {
    if (mlp.empty()) throw shape_error(std::string(name) + " has no layers");
    std::size_t width = in;
    for (const auto& layer : mlp) {
        if (layer.weight.rank() != 2 || layer.weight.rows() != width ||
            layer.bias.size() != layer.weight.cols()) {
            throw shape_error(std::string(name) + " layer shapes are inconsistent");
        }
        width = layer.weight.cols();
    }
    if (out != 0 && width != out) throw shape_error(std::string(name) + " has wrong output width");
}

}  // namespace

ModelShape shape_of(const ModelParams& p) {
    ModelShape s;
    if (p.predictor.size() != 2) throw shape_error("predictor must have two layers");
    s.dim = p.predictor[0].weight.rows();
    s.predictor_hidden = p.predictor[0].weight.cols();
    check_mlp("predictor", p.predictor, s.dim, 1);
    if (p.agg_sparse.size() != 1 || p.agg_dense.size() != 1) {
        throw shape_error("aggregation networks must be single layers");
    }
    s.n_keep = p.agg_sparse[0].weight.cols();
    check_mlp("agg_sparse", p.agg_sparse, s.dim, s.n_keep);
    check_mlp("agg_dense", p.agg_dense, s.dim, s.n_keep);
    if (p.head_p2w.empty()) throw shape_error("head_p2w has no layers");
    s.k_top = p.head_p2w[0].weight.rows();
    s.head_hidden = p.head_p2w.size() == 2 ? p.head_p2w[0].weight.cols() : 0;
    if (p.head_p2w.size() > 2 || p.head_w2p.size() != p.head_p2w.size()) {
        throw shape_error("relevance heads must have one or two matching layers");
    }
    check_mlp("head_p2w", p.head_p2w, s.k_top, 1);
    check_mlp("head_w2p", p.head_w2p, s.k_top, 1);
    if (s.head_hidden != 0 && p.head_w2p[0].weight.cols() != s.head_hidden) {
        throw shape_error("relevance heads disagree on hidden width");
    }
    return s;
}

std::vector<Tensor> flatten(const ModelParams& params) {
    std::vector<Tensor> out;
    for_each_param(params, [&out](const std::string&, const Tensor& t) { out.push_back(t); });
    return out;
}

std::vector<std::string> param_names(const ModelParams& params) {
    std::vector<std::string> out;
    for_each_param(params, [&out](const std::string& name, const Tensor&) { out.push_back(name); });
    return out;
}

std::size_t param_count(const ModelParams& params) {
    std::size_t n = 0;
    for_each_param(params, [&n](const std::string&, const Tensor& t) { n += t.size(); });
    return n;
}

ModelVars bind(Graph& graph, const ModelParams& params, bool trainable) {
    std::vector<Var> leaves;
    for_each_param(params, [&](const std::string&, const Tensor& t) {
        leaves.push_back(trainable ? graph.leaf(t) : graph.constant(t));
    });
    return bind_leaves(leaves, params);
}

ModelVars bind_leaves(std::span<const Var> leaves, const ModelParams& layout) {
    auto shape_mlp = [](const MlpT<Tensor>& src) { return MlpT<Var>(src.size()); };
    ModelVars vars{shape_mlp(layout.predictor), shape_mlp(layout.agg_sparse), shape_mlp(layout.agg_dense),
                   shape_mlp(layout.head_p2w), shape_mlp(layout.head_w2p)};
    std::size_t next = 0;
    for_each_param(vars, [&](const std::string&, Var& v) {
        if (next >= leaves.size()) throw shape_error("bind_leaves: too few leaves");
        v = leaves[next++];
    });
    if (next != leaves.size()) throw shape_error("bind_leaves: too many leaves");
    return vars;
}

Var mlp_forward(const MlpT<Var>& mlp, Var x) {
    for (std::size_t i = 0; i < mlp.size(); ++i) {
        x = add_row(matmul(x, mlp[i].weight), mlp[i].bias);
        if (i + 1 < mlp.size()) x = tanh(x);
    }
    return x;
}

}  // namespace seps
