#pragma once

#include <deque>
#include <unordered_map>

#include "vitfreeze/tape.hpp"

namespace vitfreeze {

// A value flowing through a forward pass: always carries the tensor, and a
// tape node when the pass is being recorded.
struct Val {
    const Tensor* v = nullptr;
    NodeId n = kNoNode;
    const Tensor& t() const { return *v; }
};

// Executes the same forward code either recording onto a Tape (trainable
// region) or as plain tensor math (frozen region, evaluation).  Both lanes
// call the identical kernels in ops::, so values are bitwise equal across
// lanes — freezing can never change what the network computes.
class Exec {
public:
    explicit Exec(Tape* tape) : tape_(tape) {}
    bool taped() const { return tape_ != nullptr; }
    Tape* tape() { return tape_; }

    Val constant(Tensor t) { return make(std::move(t), false); }
    // Parameters are leafed once per tape; repeated lookups return the same
    // node so gradients accumulate correctly.
    Val param(const Tensor& p) {
        if (!tape_) return own(p);
        auto it = params_.find(&p);
        if (it != params_.end()) return it->second;
        NodeId id = tape_->leaf(p, p.requires_grad);
        Val v{&tape_->value(id), id};
        params_.emplace(&p, v);
        return v;
    }
    // Output of a frozen prefix entering a recorded region: a constant that
    // additionally stops backward traversal.
    Val frozen_boundary(Tensor t) {
        Val v = make(std::move(t), false);
        if (tape_) tape_->mark_frozen_boundary(v.n);
        return v;
    }
    NodeId node_of(const Tensor& p) const {
        auto it = params_.find(&p);
        return it == params_.end() ? kNoNode : it->second.n;
    }

    Val add(Val a, Val b) {
        if (tape_) return from(tape_->add(a.n, b.n));
        return own(ops::add(a.t(), b.t()));
    }
    Val sub(Val a, Val b) {
        if (tape_) return from(tape_->sub(a.n, b.n));
        return own(ops::sub(a.t(), b.t()));
    }
    Val mul(Val a, Val b) {
        if (tape_) return from(tape_->mul(a.n, b.n));
        return own(ops::mul(a.t(), b.t()));
    }
    Val scale(Val a, double s) {
        if (tape_) return from(tape_->scale(a.n, s));
        return own(ops::scale(a.t(), s));
    }
    Val matmul(Val a, Val b) {
        if (tape_) return from(tape_->matmul(a.n, b.n));
        return own(ops::matmul(a.t(), b.t()));
    }
    Val transpose(Val a, std::vector<int64_t> perm) {
        if (tape_) return from(tape_->transpose(a.n, perm));
        return own(ops::transpose(a.t(), perm));
    }
    Val reshape(Val a, Shape s) {
        if (tape_) return from(tape_->reshape(a.n, std::move(s)));
        return own(ops::reshape(a.t(), std::move(s)));
    }
    Val layer_norm(Val x, Val gamma, Val beta, double eps) {
        if (tape_) return from(tape_->layer_norm(x.n, gamma.n, beta.n, eps));
        return own(ops::layer_norm(x.t(), gamma.t(), beta.t(), eps));
    }
    Val softmax_last(Val x) {
        if (tape_) return from(tape_->softmax_last(x.n));
        return own(ops::softmax_last(x.t()));
    }
    Val gelu(Val x, ops::GeluMode mode) {
        if (tape_) return from(tape_->gelu(x.n, mode));
        return own(ops::gelu(x.t(), mode));
    }
    Val avgpool2x(Val x) {
        if (tape_) return from(tape_->avgpool2x(x.n));
        return own(ops::avgpool2x(x.t()));
    }
    Val upsample2x(Val x, Val kernel) {
        if (tape_) return from(tape_->upsample2x(x.n, kernel.n));
        return own(ops::upsample2x(x.t(), kernel.t()));
    }
    Val gather_rows(Val x, const std::vector<int64_t>& idx, int64_t rows_out) {
        if (tape_) return from(tape_->gather_rows(x.n, idx, rows_out));
        return own(ops::gather_rows(x.t(), idx, rows_out));
    }
    Val scatter_rows(Val x, const std::vector<int64_t>& idx, int64_t rows_out) {
        if (tape_) return from(tape_->scatter_rows(x.n, idx, rows_out));
        return own(ops::scatter_rows(x.t(), idx, rows_out));
    }
    Val sum_all(Val x) {
        if (tape_) return from(tape_->sum_all(x.n));
        return own(ops::sum_all(x.t()));
    }

private:
    Val make(Tensor t, bool requires_grad) {
        if (tape_) {
            NodeId id = tape_->leaf(std::move(t), requires_grad);
            return {&tape_->value(id), id};
        }
        arena_.push_back(std::move(t));
        return {&arena_.back(), kNoNode};
    }
    Val own(Tensor t) {
        arena_.push_back(std::move(t));
        return {&arena_.back(), kNoNode};
    }
    Val from(NodeId id) { return {&tape_->value(id), id}; }

    Tape* tape_;
    std::deque<Tensor> arena_;
    std::unordered_map<const Tensor*, Val> params_;
};

}  // namespace vitfreeze
