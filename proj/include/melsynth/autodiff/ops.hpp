#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "melsynth/autodiff/tensor.hpp"
#include "melsynth/rng.hpp"

// Dense kernels over row-major tensors, each recording its own backward
// closure. Sequence data is (time, channels); weights are (in, out) for
// linear layers and (kernel, in, out) for convolutions.

namespace melsynth::autodiff {

enum class PadMode { kSame, kCausal };

// ---------------------------------------------------------------- elementwise

template <class T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "add");
    Tensor<T> out = make_output(tape, a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    if (tape)
        tape->record([a, b, out] {
            for (std::size_t i = 0; i < out.size(); ++i) {
                const T g = out.grad()[i];
                if (a.requires_grad()) a.accumulate_grad(i, g);
                if (b.requires_grad()) b.accumulate_grad(i, g);
            }
        });
    return out;
}

template <class T>
Tensor<T> sub(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "sub");
    Tensor<T> out = make_output(tape, a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    if (tape)
        tape->record([a, b, out] {
            for (std::size_t i = 0; i < out.size(); ++i) {
                const T g = out.grad()[i];
                if (a.requires_grad()) a.accumulate_grad(i, g);
                if (b.requires_grad()) b.accumulate_grad(i, -g);
            }
        });
    return out;
}

template <class T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "mul");
    Tensor<T> out = make_output(tape, a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    if (tape)
        tape->record([a, b, out] {
            for (std::size_t i = 0; i < out.size(); ++i) {
                const T g = out.grad()[i];
                if (a.requires_grad()) a.accumulate_grad(i, g * b[i]);
                if (b.requires_grad()) b.accumulate_grad(i, g * a[i]);
            }
        });
    return out;
}

template <class T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& x, T c) {
    Tensor<T> out = make_output(tape, x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * c;
    if (tape)
        tape->record([x, out, c] {
            if (!x.requires_grad()) return;
            for (std::size_t i = 0; i < out.size(); ++i) x.accumulate_grad(i, out.grad()[i] * c);
        });
    return out;
}

template <class T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x) {
    Tensor<T> out = make_output(tape, x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
    if (tape)
        tape->record([x, out] {
            if (!x.requires_grad()) return;
            for (std::size_t i = 0; i < out.size(); ++i)
                if (x[i] > T(0)) x.accumulate_grad(i, out.grad()[i]);
        });
    return out;
}

template <class T>
Tensor<T> leaky_relu(Tape<T>* tape, const Tensor<T>& x, T slope) {
    Tensor<T> out = make_output(tape, x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : slope * x[i];
    if (tape)
        tape->record([x, out, slope] {
            if (!x.requires_grad()) return;
            for (std::size_t i = 0; i < out.size(); ++i)
                x.accumulate_grad(i, out.grad()[i] * (x[i] > T(0) ? T(1) : slope));
        });
    return out;
}

template <class T>
Tensor<T> tanh_op(Tape<T>* tape, const Tensor<T>& x) {
    Tensor<T> out = make_output(tape, x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
    if (tape)
        tape->record([x, out] {
            if (!x.requires_grad()) return;
            for (std::size_t i = 0; i < out.size(); ++i)
                x.accumulate_grad(i, out.grad()[i] * (T(1) - out[i] * out[i]));
        });
    return out;
}

template <class T>
inline T sigmoid_scalar(T z) {
    if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
    const T e = std::exp(z);
    return e / (T(1) + e);
}

template <class T>
Tensor<T> sigmoid(Tape<T>* tape, const Tensor<T>& x) {
    Tensor<T> out = make_output(tape, x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid_scalar(x[i]);
    if (tape)
        tape->record([x, out] {
            if (!x.requires_grad()) return;
            for (std::size_t i = 0; i < out.size(); ++i)
                x.accumulate_grad(i, out.grad()[i] * out[i] * (T(1) - out[i]));
        });
    return out;
}

// Inverted dropout; identity in inference mode. Masks depend only on the rng
// stream, never on values.
template <class T>
Tensor<T> dropout(Tape<T>* tape, const Tensor<T>& x, double p, Rng& rng, bool training) {
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0,1)");
    if (!training || p == 0.0) {
        Tensor<T> out = make_output(tape, x.shape());
        std::copy(x.value().begin(), x.value().end(), out.value().begin());
        if (tape)
            tape->record([x, out] {
                if (!x.requires_grad()) return;
                for (std::size_t i = 0; i < out.size(); ++i) x.accumulate_grad(i, out.grad()[i]);
            });
        return out;
    }
    auto mask = std::make_shared<std::vector<T>>(x.size());
    const T keep_scale = T(1.0 / (1.0 - p));
    for (std::size_t i = 0; i < x.size(); ++i)
        (*mask)[i] = rng.bernoulli(p) ? T(0) : keep_scale;
    Tensor<T> out = make_output(tape, x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * (*mask)[i];
    if (tape)
        tape->record([x, out, mask] {
            if (!x.requires_grad()) return;
            for (std::size_t i = 0; i < out.size(); ++i)
                x.accumulate_grad(i, out.grad()[i] * (*mask)[i]);
        });
    return out;
}

// ------------------------------------------------------------------- shaping

template <class T>
Tensor<T> reshape(Tape<T>* tape, const Tensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.size())
        throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " +
                                    shape_str(shape));
    Tensor<T> out = make_output(tape, std::move(shape));
    std::copy(x.value().begin(), x.value().end(), out.value().begin());
    if (tape)
        tape->record([x, out] {
            if (!x.requires_grad()) return;
            for (std::size_t i = 0; i < out.size(); ++i) x.accumulate_grad(i, out.grad()[i]);
        });
    return out;
}

template <class T>
Tensor<T> concat(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b, std::size_t axis) {
    if (a.rank() != b.rank()) throw std::invalid_argument("concat: rank mismatch");
    Shape out_shape = a.shape();
    if (a.rank() == 1) {
        if (axis != 0) throw std::invalid_argument("concat: bad axis for rank-1");
        out_shape[0] = a.dim(0) + b.dim(0);
    } else if (a.rank() == 2) {
        if (axis == 0) {
            if (a.cols() != b.cols())
                throw std::invalid_argument("concat: column mismatch " + shape_str(a.shape()) +
                                            " vs " + shape_str(b.shape()));
            out_shape[0] = a.rows() + b.rows();
        } else if (axis == 1) {
            if (a.rows() != b.rows())
                throw std::invalid_argument("concat: row mismatch " + shape_str(a.shape()) +
                                            " vs " + shape_str(b.shape()));
            out_shape[1] = a.cols() + b.cols();
        } else {
            throw std::invalid_argument("concat: bad axis");
        }
    } else {
        throw std::invalid_argument("concat: rank > 2 unsupported");
    }
    Tensor<T> out = make_output(tape, out_shape);
    if (a.rank() == 1 || axis == 0) {
        std::copy(a.value().begin(), a.value().end(), out.value().begin());
        std::copy(b.value().begin(), b.value().end(), out.value().begin() + a.size());
    } else {
        for (std::size_t r = 0; r < a.rows(); ++r) {
            std::copy(&a.at(r, 0), &a.at(r, 0) + a.cols(), &out.at(r, 0));
            std::copy(&b.at(r, 0), &b.at(r, 0) + b.cols(), &out.at(r, 0) + a.cols());
        }
    }
    if (tape)
        tape->record([a, b, out, axis] {
            if (a.rank() == 1 || axis == 0) {
                if (a.requires_grad())
                    for (std::size_t i = 0; i < a.size(); ++i) a.accumulate_grad(i, out.grad()[i]);
                if (b.requires_grad())
                    for (std::size_t i = 0; i < b.size(); ++i)
                        b.accumulate_grad(i, out.grad()[a.size() + i]);
            } else {
                const std::size_t oc = out.cols();
                for (std::size_t r = 0; r < a.rows(); ++r) {
                    if (a.requires_grad())
                        for (std::size_t c = 0; c < a.cols(); ++c)
                            a.accumulate_grad(r * a.cols() + c, out.grad()[r * oc + c]);
                    if (b.requires_grad())
                        for (std::size_t c = 0; c < b.cols(); ++c)
                            b.accumulate_grad(r * b.cols() + c, out.grad()[r * oc + a.cols() + c]);
                }
            }
        });
    return out;
}

template <class T>
Tensor<T> slice_rows(Tape<T>* tape, const Tensor<T>& x, std::size_t r0, std::size_t r1) {
    if (x.rank() != 2 || r1 > x.rows() || r0 >= r1)
        throw std::invalid_argument("slice_rows: bad range on " + shape_str(x.shape()));
    Tensor<T> out = make_output(tape, Shape{r1 - r0, x.cols()});
    std::copy(&x.at(r0, 0), &x.at(r0, 0) + out.size(), out.data());
    if (tape)
        tape->record([x, out, r0] {
            if (!x.requires_grad()) return;
            const std::size_t base = r0 * x.cols();
            for (std::size_t i = 0; i < out.size(); ++i) x.accumulate_grad(base + i, out.grad()[i]);
        });
    return out;
}

template <class T>
Tensor<T> slice_cols(Tape<T>* tape, const Tensor<T>& x, std::size_t c0, std::size_t c1) {
    if (x.rank() != 2 || c1 > x.cols() || c0 >= c1)
        throw std::invalid_argument("slice_cols: bad range on " + shape_str(x.shape()));
    Tensor<T> out = make_output(tape, Shape{x.rows(), c1 - c0});
    for (std::size_t r = 0; r < x.rows(); ++r)
        std::copy(&x.at(r, c0), &x.at(r, c1), &out.at(r, 0));
    if (tape)
        tape->record([x, out, c0] {
            if (!x.requires_grad()) return;
            for (std::size_t r = 0; r < out.rows(); ++r)
                for (std::size_t c = 0; c < out.cols(); ++c)
                    x.accumulate_grad(r * x.cols() + c0 + c, out.grad()[r * out.cols() + c]);
        });
    return out;
}

template <class T>
Tensor<T> transpose(Tape<T>* tape, const Tensor<T>& x) {
    if (x.rank() != 2) throw std::invalid_argument("transpose: rank-2 only");
    Tensor<T> out = make_output(tape, Shape{x.cols(), x.rows()});
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) out.at(c, r) = x.at(r, c);
    if (tape)
        tape->record([x, out] {
            if (!x.requires_grad()) return;
            for (std::size_t r = 0; r < x.rows(); ++r)
                for (std::size_t c = 0; c < x.cols(); ++c)
                    x.accumulate_grad(r * x.cols() + c, out.grad()[c * x.rows() + r]);
        });
    return out;
}

// Stack rank-1 rows (all same length) into (T, C).
template <class T>
Tensor<T> stack_rows(Tape<T>* tape, const std::vector<Tensor<T>>& rows) {
    if (rows.empty()) throw std::invalid_argument("stack_rows: empty input");
    const std::size_t c = rows[0].size();
    for (const auto& r : rows)
        if (r.rank() != 1 || r.size() != c)
            throw std::invalid_argument("stack_rows: inconsistent row shapes");
    Tensor<T> out = make_output(tape, Shape{rows.size(), c});
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy(rows[r].value().begin(), rows[r].value().end(), &out.at(r, 0));
    if (tape)
        tape->record([rows, out, c] {
            for (std::size_t r = 0; r < rows.size(); ++r) {
                if (!rows[r].requires_grad()) continue;
                for (std::size_t i = 0; i < c; ++i)
                    rows[r].accumulate_grad(i, out.grad()[r * c + i]);
            }
        });
    return out;
}

// Stack scalars into a rank-1 vector.
template <class T>
Tensor<T> stack_scalars(Tape<T>* tape, const std::vector<Tensor<T>>& xs) {
    if (xs.empty()) throw std::invalid_argument("stack_scalars: empty input");
    Tensor<T> out = make_output(tape, Shape{xs.size()});
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i].size() != 1) throw std::invalid_argument("stack_scalars: non-scalar element");
        out[i] = xs[i][0];
    }
    if (tape)
        tape->record([xs, out] {
            for (std::size_t i = 0; i < xs.size(); ++i)
                if (xs[i].requires_grad()) xs[i].accumulate_grad(0, out.grad()[i]);
        });
    return out;
}

// ------------------------------------------------------------- linear algebra

// y = x W + b.  x: (N, in) or (in); W: (in, out); b: (out) or undefined.
template <class T>
Tensor<T> linear(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    const bool vec = x.rank() == 1;
    const std::size_t n = vec ? 1 : x.rows();
    const std::size_t in = vec ? x.dim(0) : x.cols();
    if (w.rank() != 2 || w.rows() != in)
        throw std::invalid_argument("linear: input " + shape_str(x.shape()) +
                                    " incompatible with weight " + shape_str(w.shape()));
    const std::size_t out_dim = w.cols();
    if (b.defined() && b.size() != out_dim)
        throw std::invalid_argument("linear: bias " + shape_str(b.shape()) +
                                    " incompatible with weight " + shape_str(w.shape()));
    Tensor<T> out = make_output(tape, vec ? Shape{out_dim} : Shape{n, out_dim});
    for (std::size_t r = 0; r < n; ++r) {
        T* orow = out.data() + r * out_dim;
        if (b.defined())
            std::copy(b.value().begin(), b.value().end(), orow);
        for (std::size_t i = 0; i < in; ++i) {
            const T xv = x[r * in + i];
            if (xv == T(0)) continue;
            const T* wrow = w.data() + i * out_dim;
            for (std::size_t o = 0; o < out_dim; ++o) orow[o] += xv * wrow[o];
        }
    }
    if (tape)
        tape->record([x, w, b, out, n, in, out_dim] {
            for (std::size_t r = 0; r < n; ++r) {
                const T* grow = out.grad().data() + r * out_dim;
                if (x.requires_grad()) {
                    for (std::size_t i = 0; i < in; ++i) {
                        const T* wrow = w.data() + i * out_dim;
                        T acc = T(0);
                        for (std::size_t o = 0; o < out_dim; ++o) acc += wrow[o] * grow[o];
                        x.accumulate_grad(r * in + i, acc);
                    }
                }
                if (w.requires_grad()) {
                    for (std::size_t i = 0; i < in; ++i) {
                        const T xv = x[r * in + i];
                        if (xv == T(0)) continue;
                        T* gw = w.grad().data() + i * out_dim;
                        for (std::size_t o = 0; o < out_dim; ++o) gw[o] += xv * grow[o];
                    }
                }
                if (b.defined() && b.requires_grad())
                    for (std::size_t o = 0; o < out_dim; ++o) b.accumulate_grad(o, grow[o]);
            }
        });
    return out;
}

// y_r = sum_c M[r,c] v[c]
template <class T>
Tensor<T> matvec(Tape<T>* tape, const Tensor<T>& m, const Tensor<T>& v) {
    if (m.rank() != 2 || v.rank() != 1 || m.cols() != v.dim(0))
        throw std::invalid_argument("matvec: " + shape_str(m.shape()) + " vs " +
                                    shape_str(v.shape()));
    Tensor<T> out = make_output(tape, Shape{m.rows()});
    for (std::size_t r = 0; r < m.rows(); ++r) {
        T acc = T(0);
        for (std::size_t c = 0; c < m.cols(); ++c) acc += m.at(r, c) * v[c];
        out[r] = acc;
    }
    if (tape)
        tape->record([m, v, out] {
            for (std::size_t r = 0; r < m.rows(); ++r) {
                const T g = out.grad()[r];
                if (m.requires_grad())
                    for (std::size_t c = 0; c < m.cols(); ++c)
                        m.accumulate_grad(r * m.cols() + c, g * v[c]);
                if (v.requires_grad())
                    for (std::size_t c = 0; c < m.cols(); ++c)
                        v.accumulate_grad(c, g * m.at(r, c));
            }
        });
    return out;
}

// y_c = sum_r v[r] M[r,c]  (weighted sum of rows)
template <class T>
Tensor<T> vecmat(Tape<T>* tape, const Tensor<T>& v, const Tensor<T>& m) {
    if (m.rank() != 2 || v.rank() != 1 || m.rows() != v.dim(0))
        throw std::invalid_argument("vecmat: " + shape_str(v.shape()) + " vs " +
                                    shape_str(m.shape()));
    Tensor<T> out = make_output(tape, Shape{m.cols()});
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const T vv = v[r];
        if (vv == T(0)) continue;
        for (std::size_t c = 0; c < m.cols(); ++c) out[c] += vv * m.at(r, c);
    }
    if (tape)
        tape->record([v, m, out] {
            for (std::size_t r = 0; r < m.rows(); ++r) {
                if (v.requires_grad()) {
                    T acc = T(0);
                    for (std::size_t c = 0; c < m.cols(); ++c) acc += m.at(r, c) * out.grad()[c];
                    v.accumulate_grad(r, acc);
                }
                if (m.requires_grad()) {
                    const T vv = v[r];
                    for (std::size_t c = 0; c < m.cols(); ++c)
                        m.accumulate_grad(r * m.cols() + c, vv * out.grad()[c]);
                }
            }
        });
    return out;
}

// M + v broadcast over rows
template <class T>
Tensor<T> add_rowvec(Tape<T>* tape, const Tensor<T>& m, const Tensor<T>& v) {
    if (m.rank() != 2 || v.rank() != 1 || m.cols() != v.dim(0))
        throw std::invalid_argument("add_rowvec: " + shape_str(m.shape()) + " vs " +
                                    shape_str(v.shape()));
    Tensor<T> out = make_output(tape, m.shape());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) out.at(r, c) = m.at(r, c) + v[c];
    if (tape)
        tape->record([m, v, out] {
            for (std::size_t r = 0; r < m.rows(); ++r)
                for (std::size_t c = 0; c < m.cols(); ++c) {
                    const T g = out.grad()[r * m.cols() + c];
                    if (m.requires_grad()) m.accumulate_grad(r * m.cols() + c, g);
                    if (v.requires_grad()) v.accumulate_grad(c, g);
                }
        });
    return out;
}

// ----------------------------------------------------------------- embedding

template <class T>
Tensor<T> embedding(Tape<T>* tape, const std::vector<int>& ids, const Tensor<T>& table) {
    if (table.rank() != 2) throw std::invalid_argument("embedding: table must be rank-2");
    const std::size_t v = table.rows(), d = table.cols();
    for (int id : ids)
        if (id < 0 || static_cast<std::size_t>(id) >= v)
            throw std::invalid_argument("embedding: id " + std::to_string(id) +
                                        " out of range for table " + shape_str(table.shape()));
    Tensor<T> out = make_output(tape, Shape{ids.size(), d});
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy(&table.at(ids[i], 0), &table.at(ids[i], 0) + d, &out.at(i, 0));
    if (tape)
        tape->record([ids, table, out, d] {
            if (!table.requires_grad()) return;
            for (std::size_t i = 0; i < ids.size(); ++i)
                for (std::size_t c = 0; c < d; ++c)
                    table.accumulate_grad(ids[i] * d + c, out.grad()[i * d + c]);
        });
    return out;
}

// --------------------------------------------------------------- convolution

// x: (T, Cin); w: (K, Cin, Cout); b: (Cout) or undefined.
// same: tap k reads x[t + (k - K/2)*d]   (K odd)
// causal: tap k reads x[t - (K-1-k)*d]   (last tap is the current sample)
template <class T>
Tensor<T> conv1d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 std::size_t dilation, PadMode mode) {
    if (x.rank() != 2 || w.rank() != 3)
        throw std::invalid_argument("conv1d: need x (T,Cin), w (K,Cin,Cout); got " +
                                    shape_str(x.shape()) + " and " + shape_str(w.shape()));
    const std::size_t t_len = x.rows(), cin = x.cols();
    const std::size_t k_len = w.dim(0), cout = w.dim(2);
    if (w.dim(1) != cin)
        throw std::invalid_argument("conv1d: input channels " + shape_str(x.shape()) +
                                    " vs weight " + shape_str(w.shape()));
    if (mode == PadMode::kSame && k_len % 2 == 0)
        throw std::invalid_argument("conv1d: same padding requires odd kernel");
    if (b.defined() && b.size() != cout)
        throw std::invalid_argument("conv1d: bias " + shape_str(b.shape()) + " vs weight " +
                                    shape_str(w.shape()));
    if (dilation == 0) throw std::invalid_argument("conv1d: dilation must be >= 1");

    auto tap_index = [=](std::size_t t, std::size_t k) -> std::ptrdiff_t {
        if (mode == PadMode::kSame)
            return static_cast<std::ptrdiff_t>(t) +
                   (static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(k_len / 2)) *
                       static_cast<std::ptrdiff_t>(dilation);
        return static_cast<std::ptrdiff_t>(t) -
               static_cast<std::ptrdiff_t>((k_len - 1 - k) * dilation);
    };

    Tensor<T> out = make_output(tape, Shape{t_len, cout});
    for (std::size_t t = 0; t < t_len; ++t) {
        T* orow = out.data() + t * cout;
        if (b.defined()) std::copy(b.value().begin(), b.value().end(), orow);
        for (std::size_t k = 0; k < k_len; ++k) {
            const std::ptrdiff_t src = tap_index(t, k);
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_len)) continue;
            const T* xrow = x.data() + src * cin;
            const T* wk = w.data() + k * cin * cout;
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const T xv = xrow[ci];
                if (xv == T(0)) continue;
                const T* wrow = wk + ci * cout;
                for (std::size_t co = 0; co < cout; ++co) orow[co] += xv * wrow[co];
            }
        }
    }
    if (tape)
        tape->record([x, w, b, out, t_len, cin, k_len, cout, tap_index] {
            for (std::size_t t = 0; t < t_len; ++t) {
                const T* grow = out.grad().data() + t * cout;
                for (std::size_t k = 0; k < k_len; ++k) {
                    const std::ptrdiff_t src = tap_index(t, k);
                    if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_len)) continue;
                    const T* wk = w.data() + k * cin * cout;
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                        if (x.requires_grad()) {
                            const T* wrow = wk + ci * cout;
                            T acc = T(0);
                            for (std::size_t co = 0; co < cout; ++co) acc += wrow[co] * grow[co];
                            x.accumulate_grad(src * cin + ci, acc);
                        }
                        if (w.requires_grad()) {
                            const T xv = x[src * cin + ci];
                            if (xv == T(0)) continue;
                            T* gw = w.grad().data() + (k * cin + ci) * cout;
                            for (std::size_t co = 0; co < cout; ++co) gw[co] += xv * grow[co];
                        }
                    }
                }
                if (b.defined() && b.requires_grad())
                    for (std::size_t co = 0; co < cout; ++co) b.accumulate_grad(co, grow[co]);
            }
        });
    return out;
}

// Transposed conv: out[t*s + k] += w[k]^T x[t]; out length (T-1)*s + K.
template <class T>
Tensor<T> tconv1d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                  std::size_t stride) {
    if (x.rank() != 2 || w.rank() != 3)
        throw std::invalid_argument("tconv1d: need x (T,Cin), w (K,Cin,Cout); got " +
                                    shape_str(x.shape()) + " and " + shape_str(w.shape()));
    const std::size_t t_len = x.rows(), cin = x.cols();
    const std::size_t k_len = w.dim(0), cout = w.dim(2);
    if (w.dim(1) != cin)
        throw std::invalid_argument("tconv1d: input channels " + shape_str(x.shape()) +
                                    " vs weight " + shape_str(w.shape()));
    if (stride == 0 || k_len < stride)
        throw std::invalid_argument("tconv1d: need stride >= 1 and kernel >= stride");
    const std::size_t out_len = (t_len - 1) * stride + k_len;
    Tensor<T> out = make_output(tape, Shape{out_len, cout});
    if (b.defined()) {
        if (b.size() != cout) throw std::invalid_argument("tconv1d: bad bias shape");
        for (std::size_t t = 0; t < out_len; ++t)
            std::copy(b.value().begin(), b.value().end(), out.data() + t * cout);
    }
    for (std::size_t t = 0; t < t_len; ++t)
        for (std::size_t k = 0; k < k_len; ++k) {
            T* orow = out.data() + (t * stride + k) * cout;
            const T* wk = w.data() + k * cin * cout;
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const T xv = x[t * cin + ci];
                if (xv == T(0)) continue;
                const T* wrow = wk + ci * cout;
                for (std::size_t co = 0; co < cout; ++co) orow[co] += xv * wrow[co];
            }
        }
    if (tape)
        tape->record([x, w, b, out, t_len, cin, k_len, cout, stride] {
            for (std::size_t t = 0; t < t_len; ++t)
                for (std::size_t k = 0; k < k_len; ++k) {
                    const T* grow = out.grad().data() + (t * stride + k) * cout;
                    const T* wk = w.data() + k * cin * cout;
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                        if (x.requires_grad()) {
                            const T* wrow = wk + ci * cout;
                            T acc = T(0);
                            for (std::size_t co = 0; co < cout; ++co) acc += wrow[co] * grow[co];
                            x.accumulate_grad(t * cin + ci, acc);
                        }
                        if (w.requires_grad()) {
                            const T xv = x[t * cin + ci];
                            if (xv == T(0)) continue;
                            T* gw = w.grad().data() + (k * cin + ci) * cout;
                            for (std::size_t co = 0; co < cout; ++co) gw[co] += xv * grow[co];
                        }
                    }
                }
            if (b.defined() && b.requires_grad())
                for (std::size_t t = 0; t < out.rows(); ++t)
                    for (std::size_t co = 0; co < cout; ++co)
                        b.accumulate_grad(co, out.grad()[t * cout + co]);
        });
    return out;
}

// ----------------------------------------------------------------- batchnorm

template <class T>
struct BatchNormState {
    Tensor<T> running_mean;
    Tensor<T> running_var;
    double momentum = 0.99;
    double eps = 1e-5;
};

// x: (T, C), statistics per channel over rows. Training mode uses batch stats
// (biased variance) and updates running stats; inference uses running stats.
template <class T>
Tensor<T> batchnorm1d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& gamma,
                      const Tensor<T>& beta, BatchNormState<T>& state, bool training) {
    if (x.rank() != 2) throw std::invalid_argument("batchnorm1d: need (T, C) input");
    const std::size_t n = x.rows(), c_len = x.cols();
    if (gamma.size() != c_len || beta.size() != c_len || state.running_mean.size() != c_len ||
        state.running_var.size() != c_len)
        throw std::invalid_argument("batchnorm1d: parameter shapes do not match " +
                                    shape_str(x.shape()));
    auto mean = std::make_shared<std::vector<T>>(c_len, T(0));
    auto inv_std = std::make_shared<std::vector<T>>(c_len, T(0));
    const T eps = static_cast<T>(state.eps);
    if (training) {
        for (std::size_t c = 0; c < c_len; ++c) {
            T m = T(0);
            for (std::size_t r = 0; r < n; ++r) m += x.at(r, c);
            m /= static_cast<T>(n);
            T v = T(0);
            for (std::size_t r = 0; r < n; ++r) {
                const T d = x.at(r, c) - m;
                v += d * d;
            }
            v /= static_cast<T>(n);
            (*mean)[c] = m;
            (*inv_std)[c] = T(1) / std::sqrt(v + eps);
            const T mom = static_cast<T>(state.momentum);
            state.running_mean[c] = mom * state.running_mean[c] + (T(1) - mom) * m;
            state.running_var[c] = mom * state.running_var[c] + (T(1) - mom) * v;
        }
    } else {
        for (std::size_t c = 0; c < c_len; ++c) {
            (*mean)[c] = state.running_mean[c];
            (*inv_std)[c] = T(1) / std::sqrt(state.running_var[c] + eps);
        }
    }
    Tensor<T> out = make_output(tape, x.shape());
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < c_len; ++c)
            out.at(r, c) = gamma[c] * (x.at(r, c) - (*mean)[c]) * (*inv_std)[c] + beta[c];
    if (tape)
        tape->record([x, gamma, beta, out, mean, inv_std, n, c_len, training] {
            for (std::size_t c = 0; c < c_len; ++c) {
                const T is = (*inv_std)[c];
                T sum_dy = T(0), sum_dy_xhat = T(0);
                for (std::size_t r = 0; r < n; ++r) {
                    const T dy = out.grad()[r * c_len + c];
                    const T xhat = (x.at(r, c) - (*mean)[c]) * is;
                    sum_dy += dy;
                    sum_dy_xhat += dy * xhat;
                }
                if (gamma.requires_grad()) gamma.accumulate_grad(c, sum_dy_xhat);
                if (beta.requires_grad()) beta.accumulate_grad(c, sum_dy);
                if (!x.requires_grad()) continue;
                const T g = gamma[c];
                for (std::size_t r = 0; r < n; ++r) {
                    const T dy = out.grad()[r * c_len + c];
                    const T xhat = (x.at(r, c) - (*mean)[c]) * is;
                    T dx;
                    if (training)
                        dx = g * is *
                             (dy - sum_dy / static_cast<T>(n) -
                              xhat * sum_dy_xhat / static_cast<T>(n));
                    else
                        dx = g * is * dy;
                    x.accumulate_grad(r * c_len + c, dx);
                }
            }
        });
    return out;
}

// ------------------------------------------------------------ softmax & loss

// Softmax over the last axis (rank-1 vector or each row of a rank-2 matrix).
template <class T>
Tensor<T> softmax(Tape<T>* tape, const Tensor<T>& x) {
    const std::size_t rows = x.rank() == 1 ? 1 : x.rows();
    const std::size_t cols = x.rank() == 1 ? x.dim(0) : x.cols();
    Tensor<T> out = make_output(tape, x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = x.data() + r * cols;
        T* yr = out.data() + r * cols;
        T mx = xr[0];
        for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, xr[c]);
        T z = T(0);
        for (std::size_t c = 0; c < cols; ++c) {
            yr[c] = std::exp(xr[c] - mx);
            z += yr[c];
        }
        for (std::size_t c = 0; c < cols; ++c) yr[c] /= z;
    }
    if (tape)
        tape->record([x, out, rows, cols] {
            if (!x.requires_grad()) return;
            for (std::size_t r = 0; r < rows; ++r) {
                const T* yr = out.data() + r * cols;
                const T* gr = out.grad().data() + r * cols;
                T dot = T(0);
                for (std::size_t c = 0; c < cols; ++c) dot += yr[c] * gr[c];
                for (std::size_t c = 0; c < cols; ++c)
                    x.accumulate_grad(r * cols + c, yr[c] * (gr[c] - dot));
            }
        });
    return out;
}

template <class T>
Tensor<T> sum(Tape<T>* tape, const Tensor<T>& x) {
    Tensor<T> out = make_output(tape, Shape{1});
    T acc = T(0);
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i];
    out[0] = acc;
    if (tape)
        tape->record([x, out] {
            if (!x.requires_grad()) return;
            const T g = out.grad()[0];
            for (std::size_t i = 0; i < x.size(); ++i) x.accumulate_grad(i, g);
        });
    return out;
}

template <class T>
Tensor<T> mean(Tape<T>* tape, const Tensor<T>& x) {
    Tensor<T> out = make_output(tape, Shape{1});
    T acc = T(0);
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i];
    out[0] = acc / static_cast<T>(x.size());
    if (tape)
        tape->record([x, out] {
            if (!x.requires_grad()) return;
            const T g = out.grad()[0] / static_cast<T>(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) x.accumulate_grad(i, g);
        });
    return out;
}

template <class T>
Tensor<T> mse(Tape<T>* tape, const Tensor<T>& pred, const Tensor<T>& target) {
    check_same_shape(pred, target, "mse");
    Tensor<T> out = make_output(tape, Shape{1});
    T acc = T(0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const T d = pred[i] - target[i];
        acc += d * d;
    }
    out[0] = acc / static_cast<T>(pred.size());
    if (tape)
        tape->record([pred, target, out] {
            const T g = out.grad()[0] * T(2) / static_cast<T>(pred.size());
            for (std::size_t i = 0; i < pred.size(); ++i) {
                const T d = pred[i] - target[i];
                if (pred.requires_grad()) pred.accumulate_grad(i, g * d);
                if (target.requires_grad()) target.accumulate_grad(i, -g * d);
            }
        });
    return out;
}

template <class T>
inline T softplus_scalar(T z) {
    return std::max(z, T(0)) + std::log1p(std::exp(-std::abs(z)));
}

// Mean binary cross-entropy on logits.
template <class T>
Tensor<T> bce_with_logits(Tape<T>* tape, const Tensor<T>& logits, const Tensor<T>& targets) {
    check_same_shape(logits, targets, "bce_with_logits");
    Tensor<T> out = make_output(tape, Shape{1});
    T acc = T(0);
    for (std::size_t i = 0; i < logits.size(); ++i)
        acc += softplus_scalar(logits[i]) - targets[i] * logits[i];
    out[0] = acc / static_cast<T>(logits.size());
    if (tape)
        tape->record([logits, targets, out] {
            if (!logits.requires_grad()) return;
            const T g = out.grad()[0] / static_cast<T>(logits.size());
            for (std::size_t i = 0; i < logits.size(); ++i)
                logits.accumulate_grad(i, g * (sigmoid_scalar(logits[i]) - targets[i]));
        });
    return out;
}

}  // namespace melsynth::autodiff
