#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace melsynth::autodiff {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

template <class T>
struct TensorData {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // allocated lazily, same length as value
    bool requires_grad = false;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), T(0));
    }
};

// Value-semantic handle onto a shared tensor node. Row-major storage.
template <class T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0)) : p_(std::make_shared<TensorData<T>>()) {
        p_->shape = std::move(shape);
        p_->value.assign(shape_numel(p_->shape), fill);
    }
    Tensor(Shape shape, std::vector<T> data) : p_(std::make_shared<TensorData<T>>()) {
        if (data.size() != shape_numel(shape))
            throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(shape));
        p_->shape = std::move(shape);
        p_->value = std::move(data);
    }

    static Tensor scalar(T v) { return Tensor({1}, std::vector<T>{v}); }

    bool defined() const { return static_cast<bool>(p_); }
    TensorData<T>* node() const { return p_.get(); }

    const Shape& shape() const { return p_->shape; }
    std::size_t rank() const { return p_->shape.size(); }
    std::size_t size() const { return p_->value.size(); }
    std::size_t dim(std::size_t i) const { return p_->shape[i]; }
    std::size_t rows() const { return p_->shape[0]; }
    std::size_t cols() const { return p_->shape.size() > 1 ? p_->shape[1] : 1; }

    std::vector<T>& value() const { return p_->value; }
    std::vector<T>& grad() const { return p_->grad; }
    T* data() const { return p_->value.data(); }

    T& operator[](std::size_t i) const { return p_->value[i]; }
    T& at(std::size_t r, std::size_t c) const { return p_->value[r * cols() + c]; }

    bool requires_grad() const { return p_->requires_grad; }
    Tensor& set_requires_grad(bool b = true) {
        p_->requires_grad = b;
        if (b) p_->ensure_grad();
        return *this;
    }
    void zero_grad() const { p_->zero_grad(); }
    void accumulate_grad(std::size_t i, T g) const { p_->grad[i] += g; }

    bool same_node(const Tensor& o) const { return p_ == o.p_; }

private:
    std::shared_ptr<TensorData<T>> p_;
};

// Reverse-mode tape. Ops append backward closures in execution order; backward()
// replays them in exact reverse order, accumulating (never overwriting) grads.
template <class T>
class Tape {
public:
    void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }

    std::size_t size() const { return ops_.size(); }
    void clear() { ops_.clear(); }

    void backward(const Tensor<T>& loss) {
        if (!loss.defined() || loss.size() != 1)
            throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                        (loss.defined() ? shape_str(loss.shape()) : std::string("(undefined)")));
        loss.node()->ensure_grad();
        loss.grad()[0] += T(1);
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    }

private:
    std::vector<std::function<void()>> ops_;
};

// Marks an op output as a grad-carrying intermediate when recorded on a tape.
template <class T>
inline Tensor<T> make_output(Tape<T>* tape, Shape shape) {
    Tensor<T> out(std::move(shape));
    if (tape) out.set_requires_grad(true);
    return out;
}

template <class T>
inline void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

}  // namespace melsynth::autodiff
