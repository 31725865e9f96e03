#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "vvt/agnostic_loss.hpp"
#include "vvt/errors.hpp"
#include "vvt/tensor.hpp"

namespace vvt::ad {

// Reverse-mode tape. Nodes are created in forward order and owned by the
// tape; backward lambdas capture raw parent pointers, which stay valid until
// clear(). One tape per training step, rebuilt from scratch.
struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Node&)> backward;
    int index = 0;
};

class Tape {
  public:
    Node* leaf(Tensor value) {
        nodes_.push_back(std::make_unique<Node>());
        Node* n = nodes_.back().get();
        n->value = std::move(value);
        n->grad = Tensor::zeros_like(n->value);
        n->index = static_cast<int>(nodes_.size()) - 1;
        return n;
    }

    Node* make(Tensor value, std::function<void(Node&)> back) {
        Node* n = leaf(std::move(value));
        n->backward = std::move(back);
        return n;
    }

    // Seeds d(root)/d(root) = 1 and sweeps the tape in reverse creation
    // order. The root must be scalar.
    void backward(Node* root) {
        if (root == nullptr || root->value.size() != 1)
            throw DimensionError("backward root must be a scalar node");
        for (auto& n : nodes_) n->grad.fill(0.0);
        root->grad[0] = 1.0;
        for (int i = root->index; i >= 0; --i) {
            Node* n = nodes_[static_cast<std::size_t>(i)].get();
            if (n->backward) n->backward(*n);
        }
    }

    void clear() { nodes_.clear(); }
    std::size_t size() const { return nodes_.size(); }

  private:
    std::vector<std::unique_ptr<Node>> nodes_;
};

inline Node* add(Tape& t, Node* a, Node* b) {
    require_same_shape(a->value, b->value, "add");
    Tensor v = a->value;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += b->value[i];
    return t.make(std::move(v), [a, b](Node& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            a->grad[i] += self.grad[i];
            b->grad[i] += self.grad[i];
        }
    });
}

inline Node* sub(Tape& t, Node* a, Node* b) {
    require_same_shape(a->value, b->value, "sub");
    Tensor v = a->value;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= b->value[i];
    return t.make(std::move(v), [a, b](Node& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            a->grad[i] += self.grad[i];
            b->grad[i] -= self.grad[i];
        }
    });
}

inline Node* mul(Tape& t, Node* a, Node* b) {
    require_same_shape(a->value, b->value, "mul");
    Tensor v = a->value;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= b->value[i];
    return t.make(std::move(v), [a, b](Node& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            a->grad[i] += self.grad[i] * b->value[i];
            b->grad[i] += self.grad[i] * a->value[i];
        }
    });
}

inline Node* scale(Tape& t, Node* a, double s) {
    Tensor v = a->value;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= s;
    return t.make(std::move(v), [a, s](Node& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            a->grad[i] += self.grad[i] * s;
    });
}

inline Node* add_const(Tape& t, Node* a, const Tensor& c) {
    require_same_shape(a->value, c, "add_const");
    Tensor v = a->value;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += c[i];
    return t.make(std::move(v), [a](Node& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            a->grad[i] += self.grad[i];
    });
}

// (m,k) x (k,n) -> (m,n)
inline Node* matmul(Tape& t, Node* a, Node* b) {
    if (a->value.rank() != 2 || b->value.rank() != 2 ||
        a->value.dim(1) != b->value.dim(0))
        throw DimensionError("matmul shape mismatch");
    const int m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
    Tensor v({m, n});
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            const double av = a->value.at(i, p);
            for (int j = 0; j < n; ++j) v.at(i, j) += av * b->value.at(p, j);
        }
    return t.make(std::move(v), [a, b, m, k, n](Node& self) {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                const double g = self.grad.at(i, j);
                if (g == 0.0) continue;
                for (int p = 0; p < k; ++p) {
                    a->grad.at(i, p) += g * b->value.at(p, j);
                    b->grad.at(p, j) += g * a->value.at(i, p);
                }
            }
    });
}

// (m,k) x (n,k)^T -> (m,n)
inline Node* matmul_nt(Tape& t, Node* a, Node* b) {
    if (a->value.rank() != 2 || b->value.rank() != 2 ||
        a->value.dim(1) != b->value.dim(1))
        throw DimensionError("matmul_nt shape mismatch");
    const int m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(0);
    Tensor v({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += a->value.at(i, p) * b->value.at(j, p);
            v.at(i, j) = acc;
        }
    return t.make(std::move(v), [a, b, m, k, n](Node& self) {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                const double g = self.grad.at(i, j);
                if (g == 0.0) continue;
                for (int p = 0; p < k; ++p) {
                    a->grad.at(i, p) += g * b->value.at(j, p);
                    b->grad.at(j, p) += g * a->value.at(i, p);
                }
            }
    });
}

inline Node* softmax_rows(Tape& t, Node* a) {
    if (a->value.rank() != 2) throw DimensionError("softmax_rows wants rank 2");
    const int m = a->value.dim(0), n = a->value.dim(1);
    Tensor v({m, n});
    for (int i = 0; i < m; ++i) {
        double peak = a->value.at(i, 0);
        for (int j = 1; j < n; ++j) peak = std::max(peak, a->value.at(i, j));
        double norm = 0.0;
        for (int j = 0; j < n; ++j) {
            const double e = std::exp(a->value.at(i, j) - peak);
            v.at(i, j) = e;
            norm += e;
        }
        for (int j = 0; j < n; ++j) v.at(i, j) /= norm;
    }
    return t.make(std::move(v), [a, m, n](Node& self) {
        for (int i = 0; i < m; ++i) {
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += self.grad.at(i, j) * self.value.at(i, j);
            for (int j = 0; j < n; ++j)
                a->grad.at(i, j) += self.value.at(i, j) * (self.grad.at(i, j) - dot);
        }
    });
}

inline Node* slice_cols(Tape& t, Node* a, int c0, int c1) {
    if (a->value.rank() != 2) throw DimensionError("slice_cols wants rank 2");
    const int m = a->value.dim(0), n = a->value.dim(1);
    if (c0 < 0 || c1 > n || c0 >= c1) throw DimensionError("bad column slice");
    Tensor v({m, c1 - c0});
    for (int i = 0; i < m; ++i)
        for (int j = c0; j < c1; ++j) v.at(i, j - c0) = a->value.at(i, j);
    return t.make(std::move(v), [a, m, c0, c1](Node& self) {
        for (int i = 0; i < m; ++i)
            for (int j = c0; j < c1; ++j) a->grad.at(i, j) += self.grad.at(i, j - c0);
    });
}

inline Node* concat_cols(Tape& t, const std::vector<Node*>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols of nothing");
    const int m = parts.front()->value.dim(0);
    int n = 0;
    for (Node* p : parts) {
        if (p->value.rank() != 2 || p->value.dim(0) != m)
            throw DimensionError("concat_cols row mismatch");
        n += p->value.dim(1);
    }
    Tensor v({m, n});
    int off = 0;
    for (Node* p : parts) {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < p->value.dim(1); ++j)
                v.at(i, off + j) = p->value.at(i, j);
        off += p->value.dim(1);
    }
    return t.make(std::move(v), [parts, m](Node& self) {
        int off = 0;
        for (Node* p : parts) {
            const int w = p->value.dim(1);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < w; ++j) p->grad.at(i, j) += self.grad.at(i, off + j);
            off += w;
        }
    });
}

inline Node* concat_rows(Tape& t, const std::vector<Node*>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows of nothing");
    const int d = parts.front()->value.dim(1);
    int m = 0;
    for (Node* p : parts) {
        if (p->value.rank() != 2 || p->value.dim(1) != d)
            throw DimensionError("concat_rows column mismatch");
        m += p->value.dim(0);
    }
    Tensor v({m, d});
    int off = 0;
    for (Node* p : parts) {
        for (int i = 0; i < p->value.dim(0); ++i, ++off)
            for (int j = 0; j < d; ++j) v.at(off, j) = p->value.at(i, j);
    }
    return t.make(std::move(v), [parts, d](Node& self) {
        int off = 0;
        for (Node* p : parts) {
            for (int i = 0; i < p->value.dim(0); ++i, ++off)
                for (int j = 0; j < d; ++j) p->grad.at(i, j) += self.grad.at(off, j);
        }
    });
}

// Row-wise max over the column range [c0,c1): (m,n) -> (m,). Gradient routes
// to the first-index max per row, matching the analytic loss gradient.
inline Node* max_over_cols(Tape& t, Node* a, int c0, int c1) {
    if (a->value.rank() != 2) throw DimensionError("max_over_cols wants rank 2");
    const int m = a->value.dim(0), n = a->value.dim(1);
    if (c0 < 0 || c1 > n || c0 >= c1) throw DimensionError("bad column range");
    Tensor v({m});
    auto arg = std::make_shared<std::vector<int>>(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        int best = c0;
        for (int j = c0 + 1; j < c1; ++j)
            if (a->value.at(i, j) > a->value.at(i, best)) best = j;
        (*arg)[static_cast<std::size_t>(i)] = best;
        v.at(i) = a->value.at(i, best);
    }
    return t.make(std::move(v), [a, arg, m](Node& self) {
        for (int i = 0; i < m; ++i)
            a->grad.at(i, (*arg)[static_cast<std::size_t>(i)]) += self.grad.at(i);
    });
}

// Stacks rank-1 rows into (N, L).
inline Node* stack_rows(Tape& t, const std::vector<Node*>& rows) {
    if (rows.empty()) throw DimensionError("stack_rows of nothing");
    const int l = rows.front()->value.dim(0);
    for (Node* r : rows)
        if (r->value.rank() != 1 || r->value.dim(0) != l)
            throw DimensionError("stack_rows length mismatch");
    const int n = static_cast<int>(rows.size());
    Tensor v({n, l});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < l; ++j) v.at(i, j) = rows[static_cast<std::size_t>(i)]->value.at(j);
    return t.make(std::move(v), [rows, l](Node& self) {
        for (int i = 0; i < static_cast<int>(rows.size()); ++i)
            for (int j = 0; j < l; ++j)
                rows[static_cast<std::size_t>(i)]->grad.at(j) += self.grad.at(i, j);
    });
}

inline Node* mean_rows(Tape& t, Node* a) {
    if (a->value.rank() != 2) throw DimensionError("mean_rows wants rank 2");
    const int m = a->value.dim(0), n = a->value.dim(1);
    Tensor v({n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) v.at(j) += a->value.at(i, j);
    const double inv = 1.0 / static_cast<double>(m);
    for (int j = 0; j < n; ++j) v.at(j) *= inv;
    return t.make(std::move(v), [a, m, n, inv](Node& self) {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) a->grad.at(i, j) += self.grad.at(j) * inv;
    });
}

inline Node* mean_all(Tape& t, Node* a) {
    Tensor v({1});
    const double inv = a->value.size() ? 1.0 / static_cast<double>(a->value.size()) : 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < a->value.size(); ++i) acc += a->value[i];
    v[0] = acc * inv;
    return t.make(std::move(v), [a, inv](Node& self) {
        const double g = self.grad[0] * inv;
        for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
    });
}

inline Node* mse_against(Tape& t, Node* a, const Tensor& target) {
    require_same_shape(a->value, target, "mse_against");
    Tensor v({1});
    const double inv = a->value.size() ? 1.0 / static_cast<double>(a->value.size()) : 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < a->value.size(); ++i) {
        const double d = a->value[i] - target[i];
        acc += d * d;
    }
    v[0] = acc * inv;
    Tensor tgt = target;
    return t.make(std::move(v), [a, tgt = std::move(tgt), inv](Node& self) {
        const double g = self.grad[0] * 2.0 * inv;
        for (std::size_t i = 0; i < a->grad.size(); ++i)
            a->grad[i] += g * (a->value[i] - tgt[i]);
    });
}

inline Node* exp(Tape& t, Node* a) {
    Tensor v = a->value;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(v[i]);
    return t.make(std::move(v), [a](Node& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            a->grad[i] += self.grad[i] * self.value[i];
    });
}

inline Node* silu(Tape& t, Node* a) {
    Tensor v = a->value;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-v[i]));
        v[i] *= s;
    }
    return t.make(std::move(v), [a](Node& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double x = a->value[i];
            const double s = 1.0 / (1.0 + std::exp(-x));
            a->grad[i] += self.grad[i] * s * (1.0 + x * (1.0 - s));
        }
    });
}

// 3x3 convolution over channels-last images (N,H,W,Cin), zero padding 1,
// stride 1 or 2, weight (3,3,Cin,Cout), bias (Cout).
inline Node* conv2d(Tape& t, Node* x, Node* w, Node* b, int stride) {
    if (x->value.rank() != 4) throw DimensionError("conv2d input must be (N,H,W,C)");
    if (w->value.rank() != 4 || w->value.dim(0) != 3 || w->value.dim(1) != 3)
        throw DimensionError("conv2d weight must be (3,3,Cin,Cout)");
    if (stride != 1 && stride != 2) throw DimensionError("conv2d stride must be 1 or 2");
    const int n = x->value.dim(0), h = x->value.dim(1), wd = x->value.dim(2);
    const int ci = x->value.dim(3), co = w->value.dim(3);
    if (w->value.dim(2) != ci) throw DimensionError("conv2d channel mismatch");
    if (b->value.rank() != 1 || b->value.dim(0) != co)
        throw DimensionError("conv2d bias must be (Cout)");
    const int oh = (h - 1) / stride + 1, ow = (wd - 1) / stride + 1;

    Tensor v({n, oh, ow, co});
    for (int img = 0; img < n; ++img)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                for (int c = 0; c < co; ++c) v.at(img, oy, ox, c) = b->value.at(c);
                for (int ky = 0; ky < 3; ++ky) {
                    const int iy = oy * stride + ky - 1;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        const int ix = ox * stride + kx - 1;
                        if (ix < 0 || ix >= wd) continue;
                        for (int c = 0; c < ci; ++c) {
                            const double xv = x->value.at(img, iy, ix, c);
                            if (xv == 0.0) continue;
                            for (int o = 0; o < co; ++o)
                                v.at(img, oy, ox, o) += xv * w->value.at(ky, kx, c, o);
                        }
                    }
                }
            }
    return t.make(std::move(v), [x, w, b, n, h, wd, ci, co, oh, ow, stride](Node& self) {
        for (int img = 0; img < n; ++img)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    for (int o = 0; o < co; ++o)
                        b->grad.at(o) += self.grad.at(img, oy, ox, o);
                    for (int ky = 0; ky < 3; ++ky) {
                        const int iy = oy * stride + ky - 1;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int ix = ox * stride + kx - 1;
                            if (ix < 0 || ix >= wd) continue;
                            for (int c = 0; c < ci; ++c) {
                                const double xv = x->value.at(img, iy, ix, c);
                                double gx = 0.0;
                                for (int o = 0; o < co; ++o) {
                                    const double g = self.grad.at(img, oy, ox, o);
                                    gx += g * w->value.at(ky, kx, c, o);
                                    w->grad.at(ky, kx, c, o) += g * xv;
                                }
                                x->grad.at(img, iy, ix, c) += gx;
                            }
                        }
                    }
                }
    });
}

inline Node* upsample2(Tape& t, Node* x) {
    if (x->value.rank() != 4) throw DimensionError("upsample2 input must be (N,H,W,C)");
    const int n = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2),
              c = x->value.dim(3);
    Tensor v({n, 2 * h, 2 * w, c});
    for (int img = 0; img < n; ++img)
        for (int y = 0; y < 2 * h; ++y)
            for (int xx = 0; xx < 2 * w; ++xx)
                for (int ch = 0; ch < c; ++ch)
                    v.at(img, y, xx, ch) = x->value.at(img, y / 2, xx / 2, ch);
    return t.make(std::move(v), [x, n, h, w, c](Node& self) {
        for (int img = 0; img < n; ++img)
            for (int y = 0; y < 2 * h; ++y)
                for (int xx = 0; xx < 2 * w; ++xx)
                    for (int ch = 0; ch < c; ++ch)
                        x->grad.at(img, y / 2, xx / 2, ch) += self.grad.at(img, y, xx, ch);
    });
}

// (N,H,W,C) plus a per-channel bias vector (C).
inline Node* channel_bias(Tape& t, Node* x, Node* bias) {
    if (x->value.rank() != 4 || bias->value.rank() != 1 ||
        bias->value.dim(0) != x->value.dim(3))
        throw DimensionError("channel_bias shape mismatch");
    const int n = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2),
              c = x->value.dim(3);
    Tensor v = x->value;
    for (int img = 0; img < n; ++img)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                for (int ch = 0; ch < c; ++ch) v.at(img, y, xx, ch) += bias->value.at(ch);
    return t.make(std::move(v), [x, bias, n, h, w, c](Node& self) {
        for (int img = 0; img < n; ++img)
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx)
                    for (int ch = 0; ch < c; ++ch) {
                        x->grad.at(img, y, xx, ch) += self.grad.at(img, y, xx, ch);
                        bias->grad.at(ch) += self.grad.at(img, y, xx, ch);
                    }
    });
}

inline Node* channel_scale(Tape& t, Node* x, Node* gain) {
    if (x->value.rank() != 4 || gain->value.rank() != 1 ||
        gain->value.dim(0) != x->value.dim(3))
        throw DimensionError("channel_scale shape mismatch");
    const int n = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2),
              c = x->value.dim(3);
    Tensor v = x->value;
    for (int img = 0; img < n; ++img)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                for (int ch = 0; ch < c; ++ch) v.at(img, y, xx, ch) *= gain->value.at(ch);
    return t.make(std::move(v), [x, gain, n, h, w, c](Node& self) {
        for (int img = 0; img < n; ++img)
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx)
                    for (int ch = 0; ch < c; ++ch) {
                        x->grad.at(img, y, xx, ch) +=
                            self.grad.at(img, y, xx, ch) * gain->value.at(ch);
                        gain->grad.at(ch) +=
                            self.grad.at(img, y, xx, ch) * x->value.at(img, y, xx, ch);
                    }
    });
}

// (L,d) plus a per-feature bias vector (d).
inline Node* row_bias(Tape& t, Node* x, Node* bias) {
    if (x->value.rank() != 2 || bias->value.rank() != 1 ||
        bias->value.dim(0) != x->value.dim(1))
        throw DimensionError("row_bias shape mismatch");
    const int m = x->value.dim(0), n = x->value.dim(1);
    Tensor v = x->value;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) v.at(i, j) += bias->value.at(j);
    return t.make(std::move(v), [x, bias, m, n](Node& self) {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                x->grad.at(i, j) += self.grad.at(i, j);
                bias->grad.at(j) += self.grad.at(i, j);
            }
    });
}

// Frame i of (N,H,W,C) flattened to a (H*W, C) token block, row-major scan.
inline Node* frame_tokens(Tape& t, Node* x, int i) {
    if (x->value.rank() != 4) throw DimensionError("frame_tokens input must be (N,H,W,C)");
    const int n = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2),
              c = x->value.dim(3);
    if (i < 0 || i >= n) throw DimensionError("frame index out of range");
    Tensor v({h * w, c});
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
            for (int ch = 0; ch < c; ++ch) v.at(y * w + xx, ch) = x->value.at(i, y, xx, ch);
    return t.make(std::move(v), [x, i, h, w, c](Node& self) {
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                for (int ch = 0; ch < c; ++ch)
                    x->grad.at(i, y, xx, ch) += self.grad.at(y * w + xx, ch);
    });
}

inline Node* stack_frames(Tape& t, const std::vector<Node*>& frames, int h, int w) {
    if (frames.empty()) throw DimensionError("stack_frames of nothing");
    const int c = frames.front()->value.dim(1);
    for (Node* f : frames)
        if (f->value.rank() != 2 || f->value.dim(0) != h * w || f->value.dim(1) != c)
            throw DimensionError("stack_frames token block mismatch");
    const int n = static_cast<int>(frames.size());
    Tensor v({n, h, w, c});
    for (int i = 0; i < n; ++i)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                for (int ch = 0; ch < c; ++ch)
                    v.at(i, y, xx, ch) = frames[static_cast<std::size_t>(i)]->value.at(y * w + xx, ch);
    return t.make(std::move(v), [frames, h, w, c](Node& self) {
        for (int i = 0; i < static_cast<int>(frames.size()); ++i)
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx)
                    for (int ch = 0; ch < c; ++ch)
                        frames[static_cast<std::size_t>(i)]->grad.at(y * w + xx, ch) +=
                            self.grad.at(i, y, xx, ch);
    });
}

// Mask-guided attention loss as a tape op: forward delegates to the loss
// evaluator, backward to its analytic gradient.
inline Node* agn_loss(Tape& t, Node* probs, TokenRegionPartition part,
                      double lambda_n, LossVariant variant) {
    AttentionProbMap map;
    map.probs = probs->value;
    map.grid_h = part.grid_h;
    map.grid_w = part.grid_w;
    Tensor v({1});
    v[0] = loss_agn_variant(map, part, lambda_n, variant);
    auto shared_part = std::make_shared<TokenRegionPartition>(std::move(part));
    return t.make(std::move(v), [probs, shared_part, lambda_n, variant](Node& self) {
        AttentionProbMap m;
        m.probs = probs->value;
        m.grid_h = shared_part->grid_h;
        m.grid_w = shared_part->grid_w;
        const Tensor g = grad_loss_agn_variant(m, *shared_part, lambda_n, variant);
        for (std::size_t i = 0; i < probs->grad.size(); ++i)
            probs->grad[i] += self.grad[0] * g[i];
    });
}

// ---- parameters & optimizer ----

struct Param {
    std::string name;
    Tensor value;
    Tensor m;  // Adam first moment
    Tensor v;  // Adam second moment
};

class ParamStore {
  public:
    Param& create(const std::string& name, std::vector<int> shape) {
        if (index_.count(name)) throw ConfigError("duplicate parameter " + name);
        params_.push_back(std::make_unique<Param>());
        Param& p = *params_.back();
        p.name = name;
        p.value = Tensor(std::move(shape));
        p.m = Tensor::zeros_like(p.value);
        p.v = Tensor::zeros_like(p.value);
        index_[name] = params_.size() - 1;
        return p;
    }

    Param& get(const std::string& name) {
        const auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter " + name);
        return *params_[it->second];
    }
    const Param& get(const std::string& name) const {
        const auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter " + name);
        return *params_[it->second];
    }
    bool has(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t count() const { return params_.size(); }
    Param& at(std::size_t i) { return *params_[i]; }
    const Param& at(std::size_t i) const { return *params_[i]; }

    std::size_t total_values() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p->value.size();
        return n;
    }

  private:
    std::vector<std::unique_ptr<Param>> params_;
    std::map<std::string, std::size_t> index_;
};

// Binds parameters to tape leaves once per step and hands the gradients back.
class ParamBinder {
  public:
    ParamBinder(Tape& tape, ParamStore& store) : tape_(&tape), store_(&store) {}

    Node* operator()(const std::string& name) {
        auto it = bound_.find(name);
        if (it != bound_.end()) return it->second;
        Node* n = tape_->leaf(store_->get(name).value);
        bound_[name] = n;
        return n;
    }

    const std::map<std::string, Node*>& bound() const { return bound_; }

  private:
    Tape* tape_;
    ParamStore* store_;
    std::map<std::string, Node*> bound_;
};

struct AdamConfig {
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class AdamOptimizer {
  public:
    explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

    const AdamConfig& config() const { return cfg_; }
    long step_count() const { return step_; }
    void set_step_count(long s) { step_ = s; }

    // One update over the bound parameters; parameters that gathered no
    // gradient this step still advance their bias-correction consistently.
    void apply(ParamStore& store, const std::map<std::string, Node*>& bound) {
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (const auto& [name, node] : bound) {
            Param& p = store.get(name);
            require_same_shape(p.value, node->grad, "adam");
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                const double g = node->grad[i];
                p.m[i] = cfg_.beta1 * p.m[i] + (1.0 - cfg_.beta1) * g;
                p.v[i] = cfg_.beta2 * p.v[i] + (1.0 - cfg_.beta2) * g * g;
                const double mh = p.m[i] / bc1;
                const double vh = p.v[i] / bc2;
                p.value[i] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
            }
        }
    }

  private:
    AdamConfig cfg_;
    long step_ = 0;
};

}  // namespace vvt::ad
