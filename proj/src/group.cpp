#include "eqsur/group.hpp"

namespace eqsur {

GroupElement compose(GroupElement g, GroupElement h) {
    // rot^g.r flip^g.f rot^h.r flip^h.f ; pull h's rotation through g's flip
    const int sign = g.f ? -1 : 1;
    return GroupElement{((g.r + sign * h.r) % 4 + 4) % 4, g.f ^ h.f};
}

GroupElement inverse(GroupElement g) {
    if (g.f) return g; // every reflection is an involution
    return GroupElement{(4 - g.r) % 4, 0};
}

std::vector<GroupElement> group_elements(GroupKind kind) {
    std::vector<GroupElement> es;
    for (int r = 0; r < 4; ++r) es.push_back({r, 0});
    if (kind == GroupKind::D4)
        for (int r = 0; r < 4; ++r) es.push_back({r, 1});
    return es;
}

int group_order(GroupKind kind) { return kind == GroupKind::D4 ? 8 : 4; }

int element_index(GroupKind kind, GroupElement g) {
    if (g.f && kind == GroupKind::C4)
        throw ValidationError("element_index: reflection is not a C4 element");
    return g.f * 4 + g.r;
}

int rep_dim(RepKind rep, GroupKind kind) {
    switch (rep) {
        case RepKind::Trivial: return 1;
        case RepKind::Standard2d: return 2;
        case RepKind::Regular: return group_order(kind);
    }
    return 0;
}

std::vector<double> rep_matrix(RepKind rep, GroupKind kind, GroupElement g) {
    const int d = rep_dim(rep, kind);
    std::vector<double> m(static_cast<size_t>(d) * d, 0.0);
    switch (rep) {
        case RepKind::Trivial:
            m[0] = 1.0;
            break;
        case RepKind::Standard2d: {
            // R = [[0,-1],[1,0]] (90 deg), F = diag(1,-1); M = R^r F^f
            double a = 1, b = 0, c = 0, dd = 1;
            if (g.f) dd = -1;
            for (int i = 0; i < g.r; ++i) {
                const double na = -c, nb = -dd, nc = a, nd = b;
                a = na; b = nb; c = nc; dd = nd;
            }
            m[0] = a; m[1] = b; m[2] = c; m[3] = dd;
            break;
        }
        case RepKind::Regular: {
            // left multiplication permutation: column j maps to row idx(g*e_j)
            auto es = group_elements(kind);
            for (int j = 0; j < d; ++j) {
                const int i = element_index(kind, compose(g, es[j]));
                m[static_cast<size_t>(i) * d + j] = 1.0;
            }
            break;
        }
    }
    return m;
}

Representation make_representation(RepKind rep, GroupKind kind) {
    Representation out{rep, kind, rep_dim(rep, kind), {}};
    for (GroupElement g : group_elements(kind)) out.matrices.push_back(rep_matrix(rep, kind, g));
    return out;
}

int FieldType::channels() const {
    int c = 0;
    for (RepKind r : fields) c += rep_dim(r, group);
    return c;
}

int FieldType::field_offset(int field) const {
    int c = 0;
    for (int i = 0; i < field; ++i) c += rep_dim(fields[i], group);
    return c;
}

std::vector<int> FieldType::field_of_channel() const {
    std::vector<int> map;
    for (int f = 0; f < num_fields(); ++f)
        for (int d = 0; d < rep_dim(fields[f], group); ++d) map.push_back(f);
    return map;
}

FieldType FieldType::rb_input(GroupKind kind) {
    return FieldType{kind, {RepKind::Standard2d, RepKind::Trivial, RepKind::Trivial}};
}

FieldType FieldType::regular(int count, GroupKind kind) {
    return FieldType{kind, std::vector<RepKind>(static_cast<size_t>(count), RepKind::Regular)};
}

void act_on_index(GroupElement g, int64_t n, int64_t i1, int64_t i2, int64_t* o1, int64_t* o2) {
    if (g.f) i2 = n - 1 - i2; // reflect across the first horizontal axis
    for (int r = 0; r < g.r; ++r) {
        const int64_t t1 = n - 1 - i2;
        const int64_t t2 = i1;
        i1 = t1;
        i2 = t2;
    }
    *o1 = i1;
    *o2 = i2;
}

template <typename T>
Tensor<T> act_on_field(GroupElement g, const Tensor<T>& field, const FieldType& ftype) {
    const int rank = field.rank();
    if (rank != 4 && rank != 5)
        throw ValidationError("act_on_field: expected [B,C,N1,N2(,N3)], got " +
                              shape_str(field.shape()));
    const int64_t B = field.extent(0), C = field.extent(1);
    const int64_t N1 = field.extent(2), N2 = field.extent(3);
    const int64_t N3 = (rank == 5) ? field.extent(4) : 1;
    if (N1 != N2)
        throw ValidationError("act_on_field: horizontal grid must be square, got " +
                              shape_str(field.shape()));
    if (C != ftype.channels())
        throw ValidationError("act_on_field: field has " + std::to_string(C) +
                              " channels, field type expects " +
                              std::to_string(ftype.channels()));
    if (g.f && ftype.group == GroupKind::C4)
        throw ValidationError("act_on_field: reflection applied to a C4 field");

    // source index per output position: p_src = g^{-1} . p
    const GroupElement gi = inverse(g);
    std::vector<int64_t> src(N1 * N2);
    for (int64_t i = 0; i < N1; ++i)
        for (int64_t j = 0; j < N2; ++j) {
            int64_t s1, s2;
            act_on_index(gi, N1, i, j, &s1, &s2);
            src[i * N2 + j] = s1 * N2 + s2;
        }

    Tensor<T> out(field.shape());
    const T* pin = field.data();
    T* pout = out.data();
    const int64_t plane = N1 * N2;

#pragma omp parallel for schedule(static)
    for (int64_t b = 0; b < B; ++b) {
        for (int nf = 0; nf < ftype.num_fields(); ++nf) {
            const int off = ftype.field_offset(nf);
            const int d = rep_dim(ftype.fields[nf], ftype.group);
            const std::vector<double> m = rep_matrix(ftype.fields[nf], ftype.group, g);
            for (int co = 0; co < d; ++co) {
                T* dst = pout + ((b * C + off + co) * plane) * N3;
                for (int64_t p = 0; p < plane; ++p) {
                    const int64_t sp = src[p];
                    for (int64_t k = 0; k < N3; ++k) {
                        double acc = 0.0;
                        for (int ci = 0; ci < d; ++ci) {
                            const double w = m[static_cast<size_t>(co) * d + ci];
                            if (w == 0.0) continue;
                            acc += w * static_cast<double>(
                                           pin[((b * C + off + ci) * plane + sp) * N3 + k]);
                        }
                        dst[p * N3 + k] = static_cast<T>(acc);
                    }
                }
            }
        }
    }
    return out;
}

template Tensor<float> act_on_field(GroupElement, const Tensor<float>&, const FieldType&);
template Tensor<double> act_on_field(GroupElement, const Tensor<double>&, const FieldType&);

} // namespace eqsur
