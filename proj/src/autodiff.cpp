#include "edgeprompt/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <limits>
#include <sstream>

#include "edgeprompt/error.hpp"

namespace edgeprompt {

// ---- tape ------------------------------------------------------------------

const Tensor& Var::value() const {
    if (!tape_) throw Error(ErrorKind::State, "use of an unbound Var");
    return tape_->value(id_);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

Tensor Gradients::of(Var v) const {
    if (v.id() < grads_.size() && !grads_[v.id()].empty()) return grads_[v.id()];
    return Tensor(v.rows(), v.cols());
}

bool Gradients::reached(Var v) const { return v.id() < grads_.size() && !grads_[v.id()].empty(); }

Var Tape::push(Node node) {
    if (nodes_.size() >= std::numeric_limits<NodeId>::max())
        throw Error(ErrorKind::State, "tape is full");
    nodes_.push_back(std::move(node));
    return Var(this, static_cast<NodeId>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) {
    Node n;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::parameter(Tensor value) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = true;
    n.is_parameter = true;
    return push(std::move(n));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
    Node n;
    n.value = std::move(value);
    for (const Var& v : inputs) {
        if (v.tape() != this) throw Error(ErrorKind::State, "op mixes values from different tapes");
        n.requires_grad = n.requires_grad || requires_grad(v.id());
    }
    if (n.requires_grad) {
        n.inputs.reserve(inputs.size());
        for (const Var& v : inputs) n.inputs.push_back(v.id());
        n.backward = std::move(backward);
    }
    return push(std::move(n));
}

Gradients Tape::backward(Var loss) {
    if (loss.tape() != this) throw Error(ErrorKind::State, "loss belongs to another tape");
    if (backward_done_)
        throw Error(ErrorKind::State, "backward already ran on this tape; call reset() first");
    const Tensor& lv = value(loss.id());
    if (lv.rows() != 1 || lv.cols() != 1)
        throw Error(ErrorKind::Shape, "backward needs a scalar loss, got " + lv.shape_string());
    backward_done_ = true;

    Gradients out;
    out.grads_.resize(nodes_.size());
    auto& grads = out.grads_;
    if (!nodes_[loss.id()].requires_grad) return out;
    grads[loss.id()] = Tensor(1, 1, 1.0);

    std::vector<Tensor*> slots;
    for (std::size_t k = loss.id() + 1; k-- > 0;) {
        Node& node = nodes_[k];
        if (grads[k].empty() || !node.backward) continue;
        slots.assign(node.inputs.size(), nullptr);
        for (std::size_t i = 0; i < node.inputs.size(); ++i) {
            const NodeId in = node.inputs[i];
            if (!nodes_[in].requires_grad) continue;
            if (grads[in].empty())
                grads[in] = Tensor(nodes_[in].value.rows(), nodes_[in].value.cols());
            slots[i] = &grads[in];
        }
        node.backward(grads[k], slots);
        if (!node.is_parameter) grads[k] = Tensor();
    }
    return out;
}

void Tape::reset() {
    nodes_.clear();
    backward_done_ = false;
}

Tensor SparseMatrix::to_dense() const {
    Tensor d(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t e = offsets[r]; e < offsets[r + 1]; ++e) d(r, indices[e]) += values[e];
    return d;
}

// ---- kernels ---------------------------------------------------------------

namespace {

// c += a * b
void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c.row(i);
        const double* ai = a.row(i);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            const double* bp = b.row(p);
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// c += a * b^T
void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = b.row(j);
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
            ci[j] += s;
        }
    }
}

// c += a^T * b
void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c) {
    const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
    for (std::size_t p = 0; p < k; ++p) {
        const double* ap = a.row(p);
        const double* bp = b.row(p);
        for (std::size_t i = 0; i < m; ++i) {
            const double av = ap[i];
            if (av == 0.0) continue;
            double* ci = c.row(i);
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

void axpy(double alpha, const Tensor& x, Tensor& y) {
    auto xv = x.values();
    auto yv = y.values();
    for (std::size_t i = 0; i < xv.size(); ++i) yv[i] += alpha * xv[i];
}

Tape& tape_of(Var a) {
    if (!a.valid()) throw Error(ErrorKind::State, "use of an unbound Var");
    return *a.tape();
}

std::string shapes(const char* op, const Tensor& a, const Tensor& b) {
    return std::string(op) + ": " + a.shape_string() + " and " + b.shape_string();
}

void require_finite(const Tensor& t, const char* op) {
    if (!t.all_finite()) throw Error(ErrorKind::Domain, std::string(op) + ": non-finite input");
}

}  // namespace

// ---- ops -------------------------------------------------------------------

Var matmul(Var a, Var b) {
    Tape& tape = tape_of(a);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.cols() != bv.rows()) throw Error(ErrorKind::Shape, shapes("matmul", av, bv));
    Tensor out(av.rows(), bv.cols());
    gemm_nn(av, bv, out);
    const Tensor* ap = &av;
    const Tensor* bp = &bv;
    return tape.record(std::move(out), {a, b}, [ap, bp](const Tensor& g, std::span<Tensor* const> in) {
        if (in[0]) gemm_nt(g, *bp, *in[0]);
        if (in[1]) gemm_tn(*ap, g, *in[1]);
    });
}

Var matmul_nt(Var a, Var b) {
    Tape& tape = tape_of(a);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.cols() != bv.cols()) throw Error(ErrorKind::Shape, shapes("matmul_nt", av, bv));
    Tensor out(av.rows(), bv.rows());
    gemm_nt(av, bv, out);
    const Tensor* ap = &av;
    const Tensor* bp = &bv;
    return tape.record(std::move(out), {a, b}, [ap, bp](const Tensor& g, std::span<Tensor* const> in) {
        if (in[0]) gemm_nn(g, *bp, *in[0]);
        if (in[1]) gemm_tn(g, *ap, *in[1]);
    });
}

Var add(Var a, Var b) {
    Tape& tape = tape_of(a);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (!av.same_shape(bv)) throw Error(ErrorKind::Shape, shapes("add", av, bv));
    Tensor out = av;
    axpy(1.0, bv, out);
    return tape.record(std::move(out), {a, b}, [](const Tensor& g, std::span<Tensor* const> in) {
        if (in[0]) axpy(1.0, g, *in[0]);
        if (in[1]) axpy(1.0, g, *in[1]);
    });
}

Var sub(Var a, Var b) {
    Tape& tape = tape_of(a);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (!av.same_shape(bv)) throw Error(ErrorKind::Shape, shapes("sub", av, bv));
    Tensor out = av;
    axpy(-1.0, bv, out);
    return tape.record(std::move(out), {a, b}, [](const Tensor& g, std::span<Tensor* const> in) {
        if (in[0]) axpy(1.0, g, *in[0]);
        if (in[1]) axpy(-1.0, g, *in[1]);
    });
}

Var mul(Var a, Var b) {
    Tape& tape = tape_of(a);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (!av.same_shape(bv)) throw Error(ErrorKind::Shape, shapes("mul", av, bv));
    Tensor out(av.rows(), av.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = av.values()[i] * bv.values()[i];
    const Tensor* ap = &av;
    const Tensor* bp = &bv;
    return tape.record(std::move(out), {a, b}, [ap, bp](const Tensor& g, std::span<Tensor* const> in) {
        const std::size_t n = g.size();
        if (in[0])
            for (std::size_t i = 0; i < n; ++i) in[0]->values()[i] += g.values()[i] * bp->values()[i];
        if (in[1])
            for (std::size_t i = 0; i < n; ++i) in[1]->values()[i] += g.values()[i] * ap->values()[i];
    });
}

Var scale(Var a, double factor) {
    Tape& tape = tape_of(a);
    Tensor out = a.value();
    for (double& v : out.values()) v *= factor;
    return tape.record(std::move(out), {a}, [factor](const Tensor& g, std::span<Tensor* const> in) {
        axpy(factor, g, *in[0]);
    });
}

Var add_bias(Var a, Var bias) {
    Tape& tape = tape_of(a);
    const Tensor& av = a.value();
    const Tensor& bv = bias.value();
    if (bv.rows() != 1 || bv.cols() != av.cols()) throw Error(ErrorKind::Shape, shapes("add_bias", av, bv));
    Tensor out = av;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        double* o = out.row(r);
        for (std::size_t c = 0; c < out.cols(); ++c) o[c] += bv(0, c);
    }
    return tape.record(std::move(out), {a, bias}, [](const Tensor& g, std::span<Tensor* const> in) {
        if (in[0]) axpy(1.0, g, *in[0]);
        if (in[1]) {
            double* b = in[1]->row(0);
            for (std::size_t r = 0; r < g.rows(); ++r) {
                const double* gr = g.row(r);
                for (std::size_t c = 0; c < g.cols(); ++c) b[c] += gr[c];
            }
        }
    });
}

Var relu(Var x) { return leaky_relu(x, 0.0); }

Var leaky_relu(Var x, double slope) {
    Tape& tape = tape_of(x);
    const Tensor& xv = x.value();
    Tensor out(xv.rows(), xv.cols());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        const double v = xv.values()[i];
        out.values()[i] = v >= 0.0 ? v : slope * v;
    }
    const Tensor* xp = &xv;
    return tape.record(std::move(out), {x}, [xp, slope](const Tensor& g, std::span<Tensor* const> in) {
        auto gi = in[0]->values();
        for (std::size_t i = 0; i < g.size(); ++i)
            gi[i] += xp->values()[i] >= 0.0 ? g.values()[i] : slope * g.values()[i];
    });
}

Var softmax_rows(Var x) {
    Tape& tape = tape_of(x);
    const Tensor& xv = x.value();
    require_finite(xv, "softmax_rows");
    Tensor out(xv.rows(), xv.cols());
    for (std::size_t r = 0; r < xv.rows(); ++r) {
        const double* xr = xv.row(r);
        double* o = out.row(r);
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < xv.cols(); ++c) m = std::max(m, xr[c]);
        double z = 0.0;
        for (std::size_t c = 0; c < xv.cols(); ++c) z += (o[c] = std::exp(xr[c] - m));
        for (std::size_t c = 0; c < xv.cols(); ++c) o[c] /= z;
    }
    // The backward pass reads the recorded output in place.
    auto self = std::make_shared<const Tensor*>(nullptr);
    Var result = tape.record(std::move(out), {x}, [self](const Tensor& g, std::span<Tensor* const> in) {
        const Tensor& y_all = **self;
        for (std::size_t r = 0; r < g.rows(); ++r) {
            const double* y = y_all.row(r);
            const double* gr = g.row(r);
            double dot = 0.0;
            for (std::size_t c = 0; c < g.cols(); ++c) dot += gr[c] * y[c];
            double* d = in[0]->row(r);
            for (std::size_t c = 0; c < g.cols(); ++c) d[c] += y[c] * (gr[c] - dot);
        }
    });
    *self = &result.value();
    return result;
}

Var cross_entropy_with_logits(Var logits, std::span<const std::size_t> labels) {
    Tape& tape = tape_of(logits);
    const Tensor& lv = logits.value();
    require_finite(lv, "cross_entropy_with_logits");
    const std::size_t n = lv.rows(), classes = lv.cols();
    if (labels.size() != n)
        throw Error(ErrorKind::Shape, "cross_entropy_with_logits: " + std::to_string(labels.size()) +
                                          " labels for " + lv.shape_string() + " logits");
    if (n == 0) throw Error(ErrorKind::Shape, "cross_entropy_with_logits: empty batch");
    auto probs = std::make_shared<Tensor>(n, classes);
    auto lab = std::make_shared<std::vector<std::size_t>>(labels.begin(), labels.end());
    double loss = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        if ((*lab)[r] >= classes)
            throw Error(ErrorKind::Index, "label " + std::to_string((*lab)[r]) + " out of range for " +
                                              std::to_string(classes) + " classes");
        const double* lr = lv.row(r);
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < classes; ++c) m = std::max(m, lr[c]);
        double z = 0.0;
        for (std::size_t c = 0; c < classes; ++c) z += std::exp(lr[c] - m);
        const double log_z = m + std::log(z);
        for (std::size_t c = 0; c < classes; ++c) (*probs)(r, c) = std::exp(lr[c] - log_z);
        loss += log_z - lr[(*lab)[r]];
    }
    loss /= static_cast<double>(n);
    return tape.record(Tensor::scalar(loss), {logits},
                       [probs, lab](const Tensor& g, std::span<Tensor* const> in) {
                           const double s = g.item() / static_cast<double>(probs->rows());
                           for (std::size_t r = 0; r < probs->rows(); ++r) {
                               double* d = in[0]->row(r);
                               const double* p = probs->row(r);
                               for (std::size_t c = 0; c < probs->cols(); ++c) d[c] += s * p[c];
                               d[(*lab)[r]] -= s;
                           }
                       });
}

Var bce_with_logits(Var logits, std::span<const double> targets) {
    Tape& tape = tape_of(logits);
    const Tensor& lv = logits.value();
    require_finite(lv, "bce_with_logits");
    if (lv.cols() != 1 || lv.rows() != targets.size() || lv.rows() == 0)
        throw Error(ErrorKind::Shape, "bce_with_logits: logits " + lv.shape_string() + " with " +
                                          std::to_string(targets.size()) + " targets");
    auto tgt = std::make_shared<std::vector<double>>(targets.begin(), targets.end());
    double loss = 0.0;
    for (std::size_t i = 0; i < lv.rows(); ++i) {
        const double x = lv(i, 0);
        loss += std::max(x, 0.0) - x * (*tgt)[i] + std::log1p(std::exp(-std::abs(x)));
    }
    loss /= static_cast<double>(lv.rows());
    const Tensor* lp = &lv;
    return tape.record(Tensor::scalar(loss), {logits}, [lp, tgt](const Tensor& g, std::span<Tensor* const> in) {
        const double s = g.item() / static_cast<double>(lp->rows());
        for (std::size_t i = 0; i < lp->rows(); ++i) {
            const double sig = 1.0 / (1.0 + std::exp(-(*lp)(i, 0)));
            (*in[0])(i, 0) += s * (sig - (*tgt)[i]);
        }
    });
}

Var sum(Var x) {
    Tape& tape = tape_of(x);
    double s = 0.0;
    for (double v : x.value().values()) s += v;
    return tape.record(Tensor::scalar(s), {x}, [](const Tensor& g, std::span<Tensor* const> in) {
        const double gv = g.item();
        for (double& d : in[0]->values()) d += gv;
    });
}

Var mean(Var x) {
    const std::size_t n = x.value().size();
    if (n == 0) throw Error(ErrorKind::Shape, "mean of an empty tensor");
    return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var sum_cols(Var x) {
    Tape& tape = tape_of(x);
    const Tensor& xv = x.value();
    Tensor out(xv.rows(), 1);
    for (std::size_t r = 0; r < xv.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < xv.cols(); ++c) s += xv(r, c);
        out(r, 0) = s;
    }
    return tape.record(std::move(out), {x}, [](const Tensor& g, std::span<Tensor* const> in) {
        for (std::size_t r = 0; r < in[0]->rows(); ++r) {
            double* d = in[0]->row(r);
            for (std::size_t c = 0; c < in[0]->cols(); ++c) d[c] += g(r, 0);
        }
    });
}

Var gather_rows(Var x, std::span<const std::uint32_t> indices) {
    Tape& tape = tape_of(x);
    const Tensor& xv = x.value();
    const std::size_t d = xv.cols();
    Tensor out(indices.size(), d);
    for (std::size_t e = 0; e < indices.size(); ++e) {
        if (indices[e] >= xv.rows())
            throw Error(ErrorKind::Index, "gather_rows: index " + std::to_string(indices[e]) +
                                              " out of range for " + xv.shape_string());
        std::copy_n(xv.row(indices[e]), d, out.row(e));
    }
    auto idx = std::make_shared<std::vector<std::uint32_t>>(indices.begin(), indices.end());
    return tape.record(std::move(out), {x}, [idx](const Tensor& g, std::span<Tensor* const> in) {
        const std::size_t d = g.cols();
        for (std::size_t e = 0; e < idx->size(); ++e) {
            double* dst = in[0]->row((*idx)[e]);
            const double* src = g.row(e);
            for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
        }
    });
}

Var scatter_add_rows(Var messages, std::span<const std::uint32_t> targets, std::size_t num_rows) {
    Tape& tape = tape_of(messages);
    const Tensor& mv = messages.value();
    if (targets.size() != mv.rows())
        throw Error(ErrorKind::Shape, "scatter_add_rows: " + std::to_string(targets.size()) +
                                          " targets for " + mv.shape_string() + " messages");
    const std::size_t d = mv.cols();
    Tensor out(num_rows, d);
    for (std::size_t e = 0; e < targets.size(); ++e) {
        if (targets[e] >= num_rows)
            throw Error(ErrorKind::Index, "scatter_add_rows: target " + std::to_string(targets[e]) +
                                              " >= num_rows " + std::to_string(num_rows));
        double* dst = out.row(targets[e]);
        const double* src = mv.row(e);
        for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
    }
    auto idx = std::make_shared<std::vector<std::uint32_t>>(targets.begin(), targets.end());
    return tape.record(std::move(out), {messages}, [idx](const Tensor& g, std::span<Tensor* const> in) {
        const std::size_t d = g.cols();
        for (std::size_t e = 0; e < idx->size(); ++e) {
            double* dst = in[0]->row(e);
            const double* src = g.row((*idx)[e]);
            for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
        }
    });
}

Var scale_rows(Var x, std::span<const double> coeffs) {
    Tape& tape = tape_of(x);
    const Tensor& xv = x.value();
    if (coeffs.size() != xv.rows())
        throw Error(ErrorKind::Shape, "scale_rows: " + std::to_string(coeffs.size()) +
                                          " coefficients for " + xv.shape_string());
    Tensor out = xv;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        double* o = out.row(r);
        for (std::size_t c = 0; c < out.cols(); ++c) o[c] *= coeffs[r];
    }
    auto co = std::make_shared<std::vector<double>>(coeffs.begin(), coeffs.end());
    return tape.record(std::move(out), {x}, [co](const Tensor& g, std::span<Tensor* const> in) {
        for (std::size_t r = 0; r < g.rows(); ++r) {
            double* d = in[0]->row(r);
            const double* gr = g.row(r);
            for (std::size_t c = 0; c < g.cols(); ++c) d[c] += (*co)[r] * gr[c];
        }
    });
}

Var spmm(const SparseMatrix& matrix, Var x) {
    Tape& tape = tape_of(x);
    const Tensor& xv = x.value();
    if (matrix.cols != xv.rows())
        throw Error(ErrorKind::Shape, "spmm: sparse [" + std::to_string(matrix.rows) + "x" +
                                          std::to_string(matrix.cols) + "] and " + xv.shape_string());
    const std::size_t d = xv.cols();
    Tensor out(matrix.rows, d);
    for (std::size_t r = 0; r < matrix.rows; ++r) {
        double* o = out.row(r);
        for (std::size_t e = matrix.offsets[r]; e < matrix.offsets[r + 1]; ++e) {
            const double w = matrix.values[e];
            const double* src = xv.row(matrix.indices[e]);
            for (std::size_t c = 0; c < d; ++c) o[c] += w * src[c];
        }
    }
    // The matrix must outlive backward(); callers keep it next to the tape.
    const SparseMatrix* mp = &matrix;
    return tape.record(std::move(out), {x}, [mp](const Tensor& g, std::span<Tensor* const> in) {
        const std::size_t d = g.cols();
        for (std::size_t r = 0; r < mp->rows; ++r) {
            const double* gr = g.row(r);
            for (std::size_t e = mp->offsets[r]; e < mp->offsets[r + 1]; ++e) {
                const double w = mp->values[e];
                double* dst = in[0]->row(mp->indices[e]);
                for (std::size_t c = 0; c < d; ++c) dst[c] += w * gr[c];
            }
        }
    });
}

Var edge_softmax_aggregate(Var row_logits, Var col_logits, std::span<const std::uint32_t> rows,
                           std::span<const std::uint32_t> cols, std::span<const double> coeffs,
                           std::size_t num_rows, double slope) {
    Tape& tape = tape_of(row_logits);
    const Tensor& a = row_logits.value();
    const Tensor& b = col_logits.value();
    if (a.cols() != b.cols() || a.rows() != num_rows)
        throw Error(ErrorKind::Shape, "edge_softmax_aggregate: row logits " + a.shape_string() + ", column logits " +
                                          b.shape_string() + ", " + std::to_string(num_rows) + " rows");
    if (rows.size() != cols.size() || rows.size() != coeffs.size())
        throw Error(ErrorKind::Shape, "edge_softmax_aggregate: entry arrays differ in length");
    require_finite(a, "edge_softmax_aggregate");
    require_finite(b, "edge_softmax_aggregate");
    const std::size_t m = a.cols();
    for (std::size_t e = 0; e < rows.size(); ++e)
        if (rows[e] >= num_rows || cols[e] >= b.rows())
            throw Error(ErrorKind::Index, "edge_softmax_aggregate: entry " + std::to_string(e) + " out of range");

    // Writes softmax(leaky_relu(a[r] + b[c])) into s; z keeps the pre-activation.
    auto scores = [m, slope](const double* ar, const double* bc, double* z, double* s) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < m; ++k) {
            z[k] = ar[k] + bc[k];
            s[k] = z[k] >= 0.0 ? z[k] : slope * z[k];
            mx = std::max(mx, s[k]);
        }
        double sum = 0.0;
        for (std::size_t k = 0; k < m; ++k) sum += (s[k] = std::exp(s[k] - mx));
        for (std::size_t k = 0; k < m; ++k) s[k] /= sum;
    };

    // Scores are kept for backward; the pre-activation sign is recomputed.
    Tensor out(num_rows, m);
    auto saved = std::make_shared<std::vector<double>>(rows.size() * m);
    std::vector<double> z(m);
    for (std::size_t e = 0; e < rows.size(); ++e) {
        double* s = saved->data() + e * m;
        scores(a.row(rows[e]), b.row(cols[e]), z.data(), s);
        double* o = out.row(rows[e]);
        for (std::size_t k = 0; k < m; ++k) o[k] += coeffs[e] * s[k];
    }
    return tape.record(std::move(out), {row_logits, col_logits},
                       [&a, &b, rows, cols, coeffs, m, saved, slope](const Tensor& g, std::span<Tensor* const> in) {
                           std::vector<double> gz(m);
                           for (std::size_t e = 0; e < rows.size(); ++e) {
                               const double* s = saved->data() + e * m;
                               const double* ar = a.row(rows[e]);
                               const double* bc = b.row(cols[e]);
                               const double* gr = g.row(rows[e]);
                               double dot = 0.0;
                               for (std::size_t k = 0; k < m; ++k) dot += coeffs[e] * gr[k] * s[k];
                               for (std::size_t k = 0; k < m; ++k) {
                                   const double gl = s[k] * (coeffs[e] * gr[k] - dot);
                                   gz[k] = ar[k] + bc[k] >= 0.0 ? gl : slope * gl;
                               }
                               if (in[0]) {
                                   double* d = in[0]->row(rows[e]);
                                   for (std::size_t k = 0; k < m; ++k) d[k] += gz[k];
                               }
                               if (in[1]) {
                                   double* d = in[1]->row(cols[e]);
                                   for (std::size_t k = 0; k < m; ++k) d[k] += gz[k];
                               }
                           }
                       });
}

Var slice_rows(Var x, std::size_t begin, std::size_t end) {
    Tape& tape = tape_of(x);
    const Tensor& xv = x.value();
    if (begin > end || end > xv.rows())
        throw Error(ErrorKind::Index, "slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                                          ") of " + xv.shape_string());
    const std::size_t d = xv.cols();
    std::vector<double> data(xv.storage().begin() + static_cast<std::ptrdiff_t>(begin * d),
                             xv.storage().begin() + static_cast<std::ptrdiff_t>(end * d));
    return tape.record(Tensor(end - begin, d, std::move(data)), {x},
                       [begin, d](const Tensor& g, std::span<Tensor* const> in) {
                           auto gv = g.values();
                           auto dst = in[0]->values().subspan(begin * d, gv.size());
                           for (std::size_t i = 0; i < gv.size(); ++i) dst[i] += gv[i];
                       });
}

Var concat_cols(Var a, Var b) {
    Tape& tape = tape_of(a);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rows() != bv.rows()) throw Error(ErrorKind::Shape, shapes("concat_cols", av, bv));
    const std::size_t ca = av.cols(), cb = bv.cols();
    Tensor out(av.rows(), ca + cb);
    for (std::size_t r = 0; r < av.rows(); ++r) {
        std::copy_n(av.row(r), ca, out.row(r));
        std::copy_n(bv.row(r), cb, out.row(r) + ca);
    }
    return tape.record(std::move(out), {a, b}, [ca, cb](const Tensor& g, std::span<Tensor* const> in) {
        for (std::size_t r = 0; r < g.rows(); ++r) {
            const double* gr = g.row(r);
            if (in[0])
                for (std::size_t c = 0; c < ca; ++c) in[0]->row(r)[c] += gr[c];
            if (in[1])
                for (std::size_t c = 0; c < cb; ++c) in[1]->row(r)[c] += gr[ca + c];
        }
    });
}

Var concat_rows(Var a, Var b) {
    Tape& tape = tape_of(a);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.cols() != bv.cols()) throw Error(ErrorKind::Shape, shapes("concat_rows", av, bv));
    std::vector<double> data(av.storage());
    data.insert(data.end(), bv.storage().begin(), bv.storage().end());
    const std::size_t split = av.size();
    return tape.record(Tensor(av.rows() + bv.rows(), av.cols(), std::move(data)), {a, b},
                       [split](const Tensor& g, std::span<Tensor* const> in) {
                           auto gv = g.values();
                           if (in[0])
                               for (std::size_t i = 0; i < split; ++i) in[0]->values()[i] += gv[i];
                           if (in[1])
                               for (std::size_t i = split; i < gv.size(); ++i)
                                   in[1]->values()[i - split] += gv[i];
                       });
}

Var l2_normalize_rows(Var x, double min_norm) {
    Tape& tape = tape_of(x);
    const Tensor& xv = x.value();
    Tensor out(xv.rows(), xv.cols());
    auto norms = std::make_shared<std::vector<double>>(xv.rows());
    for (std::size_t r = 0; r < xv.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < xv.cols(); ++c) s += xv(r, c) * xv(r, c);
        const double n = std::max(std::sqrt(s), min_norm);
        (*norms)[r] = n;
        for (std::size_t c = 0; c < xv.cols(); ++c) out(r, c) = xv(r, c) / n;
    }
    auto self = std::make_shared<const Tensor*>(nullptr);
    Var result = tape.record(std::move(out), {x}, [self, norms](const Tensor& g, std::span<Tensor* const> in) {
        for (std::size_t r = 0; r < g.rows(); ++r) {
            const double* y = (*self)->row(r);
            const double* gr = g.row(r);
            double dot = 0.0;
            for (std::size_t c = 0; c < g.cols(); ++c) dot += y[c] * gr[c];
            double* d = in[0]->row(r);
            const double inv = 1.0 / (*norms)[r];
            for (std::size_t c = 0; c < g.cols(); ++c) d[c] += (gr[c] - y[c] * dot) * inv;
        }
    });
    *self = &result.value();
    return result;
}

}  // namespace edgeprompt
