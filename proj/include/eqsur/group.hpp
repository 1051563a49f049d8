#pragma once

#include <array>
#include <vector>

#include "eqsur/tensor.hpp"

namespace eqsur {

/// Symmetry group of the horizontal grid plane: the dihedral group D4
/// (90-degree rotations and flips) or its rotation subgroup C4.
enum class GroupKind { D4, C4 };

/// Element g = rot^r ∘ flip^f with flip ∘ rot^r = rot^(-r mod 4) ∘ flip.
/// The flip generator reflects across the first horizontal axis (x2 -> -x2).
struct GroupElement {
    int r = 0; // rotation index, multiples of 90 degrees
    int f = 0; // flip bit

    bool operator==(const GroupElement&) const = default;
};

GroupElement compose(GroupElement g, GroupElement h); // g after h
GroupElement inverse(GroupElement g);

/// Fixed element ordering (documented in manifests and checkpoints so the
/// regular representation's channel layout is portable):
/// (r=0..3, f=0) then (r=0..3, f=1); C4 keeps only the first four.
std::vector<GroupElement> group_elements(GroupKind kind);
int group_order(GroupKind kind);
int element_index(GroupKind kind, GroupElement g);

enum class RepKind { Trivial, Standard2d, Regular };

int rep_dim(RepKind rep, GroupKind kind);

/// Orthogonal matrix of the representation at g, row-major dim x dim.
/// Trivial: [1]. Standard2d: the 2D rotation/reflection matrix. Regular:
/// the left-multiplication permutation matrix in the fixed element order.
std::vector<double> rep_matrix(RepKind rep, GroupKind kind, GroupElement g);

/// Explicit representation table (all elements), mostly for the test suites.
struct Representation {
    RepKind kind;
    GroupKind group;
    int dim;
    std::vector<std::vector<double>> matrices; // indexed by element_index
};
Representation make_representation(RepKind rep, GroupKind kind);

/// Ordered list of field instances; total channel count is the sum of the
/// representation dimensions. The Rayleigh-Benard input field type is
/// standard2d(u1,u2) + trivial(u3) + trivial(T), C = 4.
struct FieldType {
    GroupKind group = GroupKind::D4;
    std::vector<RepKind> fields;

    int channels() const;
    int num_fields() const { return static_cast<int>(fields.size()); }
    int field_offset(int field) const;
    /// channel -> field index map (for field-shared biases, norm, dropout)
    std::vector<int> field_of_channel() const;

    static FieldType rb_input(GroupKind kind = GroupKind::D4);
    static FieldType regular(int count, GroupKind kind = GroupKind::D4);

    bool operator==(const FieldType&) const = default;
};

/// Action of g on a channel-typed feature field [... x C x N1 x N2 x N3]
/// (a trailing vertical axis is optional): horizontal axes are permuted by
/// the inverse grid action about the grid center, channel blocks are
/// multiplied by rep_matrix(., g). The vertical axis is untouched. Exact
/// (signed permutation) for every D4 field type.
template <typename T>
Tensor<T> act_on_field(GroupElement g, const Tensor<T>& field, const FieldType& ftype);

/// Horizontal grid index action p -> g.p on an N x N grid (axis reverse +
/// transpose about the grid center; no interpolation).
void act_on_index(GroupElement g, int64_t n, int64_t i1, int64_t i2, int64_t* o1, int64_t* o2);

} // namespace eqsur
