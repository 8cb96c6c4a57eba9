#include "seps/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace seps {

namespace {

Graph& graph_of(Var v) {
    if (v.graph == nullptr) throw shape_error("operation on unbound Var");
    return *v.graph;
}

void require_same_shape(const char* op, Var a, Var b) {
    if (a.graph != b.graph) throw shape_error(std::string(op) + ": operands from different graphs");
    if (!a.value().same_shape(b.value())) {
        throw shape_error(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                          " vs " + shape_string(b.shape()));
    }
}

void require_matrix(const char* op, Var a) {
    if (a.value().rank() != 2) {
        throw shape_error(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
    }
}

// Adjoint slot for a parent, or nullptr when the parent does not need a gradient.
Tensor* slot(const Graph& g, std::vector<Tensor>& adj, std::size_t id) {
    if (!g.requires_grad(id)) return nullptr;
    return &g.accumulate(adj, id);
}

template <class Fn, class Deriv>
Var unary(const char* op, Var x, Fn fn, Deriv deriv) {
    Graph& g = graph_of(x);
    const Tensor& in = x.value();
    Tensor out(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = fn(in[i]);
    const std::size_t ix = x.id;
    return g.record(op, std::move(out), {x},
                    [&g, ix, deriv](const Tensor& up, std::vector<Tensor>& adj) {
                        Tensor* gx = slot(g, adj, ix);
                        if (!gx) return;
                        const Tensor& in = g.value(Var{&g, ix});
                        for (std::size_t i = 0; i < in.size(); ++i) {
                            (*gx)[i] += up[i] * deriv(in[i]);
                        }
                    });
}

}  // namespace

Var add(Var a, Var b) {
    require_same_shape("add", a, b);
    Graph& g = graph_of(a);
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    const std::size_t ia = a.id, ib = b.id;
    return g.record("add", std::move(out), {a, b},
                    [&g, ia, ib](const Tensor& up, std::vector<Tensor>& adj) {
                        if (Tensor* ga = slot(g, adj, ia)) {
                            for (std::size_t i = 0; i < up.size(); ++i) (*ga)[i] += up[i];
                        }
                        if (Tensor* gb = slot(g, adj, ib)) {
                            for (std::size_t i = 0; i < up.size(); ++i) (*gb)[i] += up[i];
                        }
                    });
}

Var sub(Var a, Var b) {
    require_same_shape("sub", a, b);
    Graph& g = graph_of(a);
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    const std::size_t ia = a.id, ib = b.id;
    return g.record("sub", std::move(out), {a, b},
                    [&g, ia, ib](const Tensor& up, std::vector<Tensor>& adj) {
                        if (Tensor* ga = slot(g, adj, ia)) {
                            for (std::size_t i = 0; i < up.size(); ++i) (*ga)[i] += up[i];
                        }
                        if (Tensor* gb = slot(g, adj, ib)) {
                            for (std::size_t i = 0; i < up.size(); ++i) (*gb)[i] -= up[i];
                        }
                    });
}

Var mul(Var a, Var b) {
    require_same_shape("mul", a, b);
    Graph& g = graph_of(a);
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    const std::size_t ia = a.id, ib = b.id;
    return g.record("mul", std::move(out), {a, b},
                    [&g, ia, ib](const Tensor& up, std::vector<Tensor>& adj) {
                        const Tensor& av = g.value(Var{&g, ia});
                        const Tensor& bv = g.value(Var{&g, ib});
                        if (Tensor* ga = slot(g, adj, ia)) {
                            for (std::size_t i = 0; i < up.size(); ++i) (*ga)[i] += up[i] * bv[i];
                        }
                        if (Tensor* gb = slot(g, adj, ib)) {
                            for (std::size_t i = 0; i < up.size(); ++i) (*gb)[i] += up[i] * av[i];
                        }
                    });
}

Var scale(Var a, double factor) {
    Graph& g = graph_of(a);
    Tensor out = a.value();
    for (double& v : out.data()) v *= factor;
    const std::size_t ia = a.id;
    return g.record("scale", std::move(out), {a},
                    [&g, ia, factor](const Tensor& up, std::vector<Tensor>& adj) {
                        if (Tensor* ga = slot(g, adj, ia)) {
                            for (std::size_t i = 0; i < up.size(); ++i) (*ga)[i] += up[i] * factor;
                        }
                    });
}

Var add_scalar(Var a, double offset) {
    Graph& g = graph_of(a);
    Tensor out = a.value();
    for (double& v : out.data()) v += offset;
    const std::size_t ia = a.id;
    return g.record("add_scalar", std::move(out), {a},
                    [&g, ia](const Tensor& up, std::vector<Tensor>& adj) {
                        if (Tensor* ga = slot(g, adj, ia)) {
                            for (std::size_t i = 0; i < up.size(); ++i) (*ga)[i] += up[i];
                        }
                    });
}

Var operator+(Var a, Var b) { return add(a, b); }
Var operator-(Var a, Var b) { return sub(a, b); }
Var operator*(Var a, Var b) { return mul(a, b); }

Var matmul(Var a, Var b) {
    require_matrix("matmul", a);
    require_matrix("matmul", b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
    if (bv.rows() != k) {
        throw shape_error("matmul: inner dimension mismatch " + shape_string(av.shape()) + " . " +
                          shape_string(bv.shape()));
    }
    Graph& g = graph_of(a);
    Tensor out({n, m}, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av.at(i, p);
            for (std::size_t j = 0; j < m; ++j) out.at(i, j) += aip * bv.at(p, j);
        }
    }
    const std::size_t ia = a.id, ib = b.id;
    return g.record("matmul", std::move(out), {a, b},
                    [&g, ia, ib, n, k, m](const Tensor& up, std::vector<Tensor>& adj) {
                        const Tensor& av = g.value(Var{&g, ia});
                        const Tensor& bv = g.value(Var{&g, ib});
                        if (Tensor* ga = slot(g, adj, ia)) {
                            for (std::size_t i = 0; i < n; ++i)
                                for (std::size_t p = 0; p < k; ++p) {
                                    double acc = 0.0;
                                    for (std::size_t j = 0; j < m; ++j) acc += up.at(i, j) * bv.at(p, j);
                                    ga->at(i, p) += acc;
                                }
                        }
                        if (Tensor* gb = slot(g, adj, ib)) {
                            for (std::size_t i = 0; i < n; ++i)
                                for (std::size_t p = 0; p < k; ++p) {
                                    const double aip = av.at(i, p);
                                    for (std::size_t j = 0; j < m; ++j) gb->at(p, j) += aip * up.at(i, j);
                                }
                        }
                    });
}

Var add_row(Var a, Var bias) {
    require_matrix("add_row", a);
    const Tensor& av = a.value();
    const std::size_t n = av.rows(), m = av.cols();
    if (bias.value().size() != m) {
        throw shape_error("add_row: bias of shape " + shape_string(bias.shape()) +
                          " for matrix " + shape_string(av.shape()));
    }
    Graph& g = graph_of(a);
    Tensor out = av;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out.at(i, j) += bias.value()[j];
    const std::size_t ia = a.id, ib = bias.id;
    return g.record("add_row", std::move(out), {a, bias},
                    [&g, ia, ib, n, m](const Tensor& up, std::vector<Tensor>& adj) {
                        if (Tensor* ga = slot(g, adj, ia)) {
                            for (std::size_t i = 0; i < up.size(); ++i) (*ga)[i] += up[i];
                        }
                        if (Tensor* gb = slot(g, adj, ib)) {
                            for (std::size_t i = 0; i < n; ++i)
                                for (std::size_t j = 0; j < m; ++j) (*gb)[j] += up.at(i, j);
                        }
                    });
}

Var transpose(Var a) {
    require_matrix("transpose", a);
    const Tensor& av = a.value();
    const std::size_t n = av.rows(), m = av.cols();
    Graph& g = graph_of(a);
    Tensor out({m, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out.at(j, i) = av.at(i, j);
    const std::size_t ia = a.id;
    return g.record("transpose", std::move(out), {a},
                    [&g, ia, n, m](const Tensor& up, std::vector<Tensor>& adj) {
                        if (Tensor* ga = slot(g, adj, ia)) {
                            for (std::size_t i = 0; i < n; ++i)
                                for (std::size_t j = 0; j < m; ++j) ga->at(i, j) += up.at(j, i);
                        }
                    });
}

Var reshape(Var a, std::vector<std::size_t> shape) {
    Graph& g = graph_of(a);
    Tensor out(std::move(shape), a.value().data());
    const std::size_t ia = a.id;
    return g.record("reshape", std::move(out), {a},
                    [&g, ia](const Tensor& up, std::vector<Tensor>& adj) {
                        if (Tensor* ga = slot(g, adj, ia)) {
                            for (std::size_t i = 0; i < up.size(); ++i) (*ga)[i] += up[i];
                        }
                    });
}

Var sigmoid(Var x) {
    return unary(
        "sigmoid", x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double v) {
            const double y = 1.0 / (1.0 + std::exp(-v));
            return y * (1.0 - y);
        });
}

Var tanh(Var x) {
    return unary(
        "tanh", x, [](double v) { return std::tanh(v); },
        [](double v) {
            const double y = std::tanh(v);
            return 1.0 - y * y;
        });
}

Var log(Var x) {
    for (double v : x.value().data()) {
        if (!(v > 0.0)) throw numeric_error("log of non-positive value");
    }
    return unary(
        "log", x, [](double v) { return std::log(v); }, [](double v) { return 1.0 / v; });
}

Var exp(Var x) {
    return unary(
        "exp", x, [](double v) { return std::exp(v); }, [](double v) { return std::exp(v); });
}

Var square(Var x) {
    return unary(
        "square", x, [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

Var relu(Var x) {
    for (double v : x.value().data()) graph_of(x).log_branch(v > 0.0);
    return unary(
        "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Var clip(Var x, double lo, double hi) {
    if (!(lo <= hi)) throw shape_error("clip: empty interval");
    for (double v : x.value().data()) graph_of(x).log_branch(v < lo ? 0 : v > hi ? 2 : 1);
    return unary(
        "clip", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
        [lo, hi](double v) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Var sum(Var x) {
    Graph& g = graph_of(x);
    double acc = 0.0;
    for (double v : x.value().data()) acc += v;
    const std::size_t ix = x.id;
    return g.record("sum", Tensor::scalar(acc), {x},
                    [&g, ix](const Tensor& up, std::vector<Tensor>& adj) {
                        if (Tensor* gx = slot(g, adj, ix)) {
                            for (double& v : gx->data()) v += up[0];
                        }
                    });
}

Var mean(Var x) {
    const std::size_t n = x.value().size();
    if (n == 0) throw shape_error("mean of empty tensor");
    return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var softmax_columns(Var x, std::span<const bool> row_mask) {
    require_matrix("softmax_columns", x);
    const Tensor& xv = x.value();
    const std::size_t n = xv.rows(), m = xv.cols();
    if (!row_mask.empty() && row_mask.size() != n) {
        throw shape_error("softmax_columns: mask length does not match row count");
    }
    std::vector<bool> keep(n, true);
    if (!row_mask.empty()) std::copy(row_mask.begin(), row_mask.end(), keep.begin());
    if (n == 0 || std::none_of(keep.begin(), keep.end(), [](bool k) { return k; })) {
        throw shape_error("empty softmax support");
    }

    Tensor out({n, m}, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
        double hi = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i)
            if (keep[i]) hi = std::max(hi, xv.at(i, j));
        double z = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!keep[i]) continue;
            out.at(i, j) = std::exp(xv.at(i, j) - hi);
            z += out.at(i, j);
        }
        for (std::size_t i = 0; i < n; ++i) out.at(i, j) /= z;
    }

    Graph& g = graph_of(x);
    const std::size_t ix = x.id;
    Tensor w = out;
    return g.record("softmax_columns", std::move(out), {x},
                    [&g, ix, w = std::move(w), n, m](const Tensor& up, std::vector<Tensor>& adj) {
                        Tensor* gx = slot(g, adj, ix);
                        if (!gx) return;
                        for (std::size_t j = 0; j < m; ++j) {
                            double dot = 0.0;
                            for (std::size_t i = 0; i < n; ++i) dot += up.at(i, j) * w.at(i, j);
                            for (std::size_t i = 0; i < n; ++i) {
                                gx->at(i, j) += w.at(i, j) * (up.at(i, j) - dot);
                            }
                        }
                    });
}

Var weighted_softmax_columns(Var x, Var row_weight) {
    require_matrix("weighted_softmax_columns", x);
    const Tensor& xv = x.value();
    const Tensor& mv = row_weight.value();
    const std::size_t n = xv.rows(), m = xv.cols();
    if (mv.size() != n) {
        throw shape_error("weighted_softmax_columns: weight length does not match row count");
    }
    if (n == 0 || std::all_of(mv.data().begin(), mv.data().end(), [](double v) { return v == 0.0; })) {
        throw shape_error("empty softmax support");
    }

    // e_ij = exp(x_ij - c_j) with c_j taken over the rows that carry weight.
    Tensor e({n, m}, 0.0);
    std::vector<double> z(m, 0.0);
    Tensor out({n, m}, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
        double hi = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i)
            if (mv[i] != 0.0) hi = std::max(hi, xv.at(i, j));
        for (std::size_t i = 0; i < n; ++i) {
            e.at(i, j) = std::exp(xv.at(i, j) - hi);
            z[j] += mv[i] * e.at(i, j);
        }
        if (z[j] == 0.0) throw numeric_error("weighted softmax normaliser vanished");
        for (std::size_t i = 0; i < n; ++i) out.at(i, j) = mv[i] * e.at(i, j) / z[j];
    }

    Graph& g = graph_of(x);
    const std::size_t ix = x.id, im = row_weight.id;
    Tensor w = out;
    return g.record(
        "weighted_softmax_columns", std::move(out), {x, row_weight},
        [&g, ix, im, w = std::move(w), e = std::move(e), z = std::move(z), n, m](
            const Tensor& up, std::vector<Tensor>& adj) {
            Tensor* gx = slot(g, adj, ix);
            Tensor* gm = slot(g, adj, im);
            for (std::size_t j = 0; j < m; ++j) {
                double dot = 0.0;
                for (std::size_t i = 0; i < n; ++i) dot += up.at(i, j) * w.at(i, j);
                for (std::size_t i = 0; i < n; ++i) {
                    const double centred = up.at(i, j) - dot;
                    if (gx) gx->at(i, j) += w.at(i, j) * centred;
                    if (gm) (*gm)[i] += e.at(i, j) / z[j] * centred;
                }
            }
        });
}

RowMax row_max_with_arg(Var x) {
    require_matrix("row_max_with_arg", x);
    const Tensor& xv = x.value();
    const std::size_t n = xv.rows(), m = xv.cols();
    if (n == 0 || m == 0) throw shape_error("row_max_with_arg: empty matrix");
    RowMax result;
    result.argmax.resize(n);
    Tensor out({n});
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < m; ++j)
            if (xv.at(i, j) > xv.at(i, best)) best = j;
        result.argmax[i] = best;
        graph_of(x).log_branch(best);
        out[i] = xv.at(i, best);
    }
    Graph& g = graph_of(x);
    const std::size_t ix = x.id;
    result.values = g.record("row_max", std::move(out), {x},
                             [&g, ix, arg = result.argmax](const Tensor& up, std::vector<Tensor>& adj) {
                                 if (Tensor* gx = slot(g, adj, ix)) {
                                     for (std::size_t i = 0; i < arg.size(); ++i) gx->at(i, arg[i]) += up[i];
                                 }
                             });
    return result;
}

Var topk(Var x, std::size_t k) {
    const Tensor& xv = x.value();
    const std::size_t n = xv.size();
    if (n == 0) throw shape_error("topk: empty input");
    if (k == 0) throw shape_error("topk: k must be at least 1");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&xv](std::size_t a, std::size_t b) { return xv[a] > xv[b]; });
    // Padding slots repeat the first-occurring minimum.
    const std::size_t argmin = static_cast<std::size_t>(
        std::min_element(xv.data().begin(), xv.data().end()) - xv.data().begin());
    std::vector<std::size_t> source(k);
    Tensor out({k});
    for (std::size_t i = 0; i < k; ++i) {
        source[i] = i < n ? order[i] : argmin;
        graph_of(x).log_branch(source[i]);
        out[i] = xv[source[i]];
    }
    Graph& g = graph_of(x);
    const std::size_t ix = x.id;
    return g.record("topk", std::move(out), {x},
                    [&g, ix, source = std::move(source)](const Tensor& up, std::vector<Tensor>& adj) {
                        if (Tensor* gx = slot(g, adj, ix)) {
                            for (std::size_t i = 0; i < source.size(); ++i) (*gx)[source[i]] += up[i];
                        }
                    });
}

Var cosine_matrix(Var a, Var b) {
    require_matrix("cosine_matrix", a);
    require_matrix("cosine_matrix", b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const std::size_t n = av.rows(), m = bv.rows(), d = av.cols();
    if (bv.cols() != d) throw shape_error("cosine_matrix: feature dimension mismatch");

    auto norms = [d](const Tensor& t) {
        std::vector<double> out(t.rows());
        for (std::size_t i = 0; i < t.rows(); ++i) {
            double ss = 0.0;
            for (std::size_t p = 0; p < d; ++p) ss += t.at(i, p) * t.at(i, p);
            if (!(ss > 0.0)) throw shape_error("degenerate vector in alignment");
            out[i] = std::sqrt(ss);
        }
        return out;
    };
    std::vector<double> na = norms(av), nb = norms(bv);

    Tensor out({n, m});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double dot = 0.0;
            for (std::size_t p = 0; p < d; ++p) dot += av.at(i, p) * bv.at(j, p);
            out.at(i, j) = dot / (na[i] * nb[j]);
        }

    Graph& g = graph_of(a);
    const std::size_t ia = a.id, ib = b.id;
    Tensor cos = out;
    return g.record(
        "cosine_matrix", std::move(out), {a, b},
        [&g, ia, ib, n, m, d, na = std::move(na), nb = std::move(nb), cos = std::move(cos)](
            const Tensor& up, std::vector<Tensor>& adj) {
            const Tensor& av = g.value(Var{&g, ia});
            const Tensor& bv = g.value(Var{&g, ib});
            Tensor* ga = slot(g, adj, ia);
            Tensor* gb = slot(g, adj, ib);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) {
                    const double u = up.at(i, j);
                    if (u == 0.0) continue;
                    const double inv = 1.0 / (na[i] * nb[j]);
                    const double c = cos.at(i, j);
                    for (std::size_t p = 0; p < d; ++p) {
                        if (ga) ga->at(i, p) += u * (bv.at(j, p) * inv - c * av.at(i, p) / (na[i] * na[i]));
                        if (gb) gb->at(j, p) += u * (av.at(i, p) * inv - c * bv.at(j, p) / (nb[j] * nb[j]));
                    }
                }
        });
}

Var stack(const std::vector<Var>& scalars, std::size_t rows, std::size_t cols) {
    if (scalars.size() != rows * cols) throw shape_error("stack: element count mismatch");
    if (scalars.empty()) throw shape_error("stack: nothing to stack");
    Graph& g = graph_of(scalars.front());
    Tensor out({rows, cols});
    std::vector<std::size_t> ids(scalars.size());
    for (std::size_t i = 0; i < scalars.size(); ++i) {
        if (scalars[i].value().size() != 1) throw shape_error("stack: element is not a scalar");
        out[i] = scalars[i].value()[0];
        ids[i] = scalars[i].id;
    }
    return g.record("stack", std::move(out), scalars,
                    [&g, ids = std::move(ids)](const Tensor& up, std::vector<Tensor>& adj) {
                        for (std::size_t i = 0; i < ids.size(); ++i) {
                            if (Tensor* gs = slot(g, adj, ids[i])) (*gs)[0] += up[i];
                        }
                    });
}

Var straight_through(const Tensor& hard, Var soft, const Tensor& soft_ref) {
    const Tensor& sv = soft.value();
    if (!hard.same_shape(sv) || !soft_ref.same_shape(sv)) {
        throw shape_error("straight_through: shape mismatch");
    }
    Tensor out = hard;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += sv[i] - soft_ref[i];
    Graph& g = graph_of(soft);
    const std::size_t is = soft.id;
    return g.record("straight_through", std::move(out), {soft},
                    [&g, is](const Tensor& up, std::vector<Tensor>& adj) {
                        if (Tensor* gs = slot(g, adj, is)) {
                            for (std::size_t i = 0; i < up.size(); ++i) (*gs)[i] += up[i];
                        }
                    });
}

}  // namespace seps
