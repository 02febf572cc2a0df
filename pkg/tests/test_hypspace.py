import math

import numpy as np
import pytest

from hyhtm import (
    Vocabulary,
    build_hierarchy_matrix,
    build_similarity_matrix,
    euclidean_cosine,
    knn,
    load_embeddings,
    neighborhood_similarity,
    poincare_distance,
)
from hyhtm.errors import ConfigurationError, ContractError, EmbeddingParseError
from hyhtm.hypspace import poincare_distances
from hyhtm.sparse_io import MatrixCache, cache_key, load_triplets, save_triplets

from conftest import table_from_points, write_embedding_file

# Frozen values from a 50-digit evaluation of the distance formula.
D_ORIGIN_HALF = 1.0986122886681096913952452369225257046474905578227  # = ln 3
D_CORNERS = 2.1881985718624319387470477567294868287236914630897


def ball_points(rng, count, dim, radius=0.85):
    points = rng.normal(size=(count, dim))
    norms = np.linalg.norm(points, axis=1, keepdims=True)
    scale = rng.uniform(0.01, radius, size=(count, 1))
    return points / norms * scale


class TestPoincareDistance:
    def test_zero_for_equal_points(self):
        assert poincare_distance((0.3, 0.4), (0.3, 0.4)) == 0.0

    def test_origin_to_half(self):
        assert poincare_distance((0.0, 0.0), (0.5, 0.0)) == pytest.approx(
            D_ORIGIN_HALF, abs=1e-12
        )

    def test_symmetric_corners(self):
        assert poincare_distance((0.6, 0.0), (0.0, 0.6)) == pytest.approx(
            D_CORNERS, abs=1e-12
        )

    def test_symmetry_random(self):
        rng = np.random.default_rng(0)
        pts = ball_points(rng, 60, 3)
        for i in range(0, 60, 2):
            d1 = poincare_distance(pts[i], pts[i + 1])
            d2 = poincare_distance(pts[i + 1], pts[i])
            assert abs(d1 - d2) < 1e-12

    def test_triangle_inequality_random(self):
        rng = np.random.default_rng(1)
        pts = ball_points(rng, 90, 4)
        for i in range(0, 90, 3):
            u, v, w = pts[i], pts[i + 1], pts[i + 2]
            assert poincare_distance(u, w) <= (
                poincare_distance(u, v) + poincare_distance(v, w) + 1e-9
            )

    def test_dominates_euclidean_distance(self):
        rng = np.random.default_rng(2)
        pts = ball_points(rng, 80, 3)
        for i in range(0, 80, 2):
            chord = float(np.linalg.norm(pts[i] - pts[i + 1]))
            assert poincare_distance(pts[i], pts[i + 1]) >= chord

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(3)
        pts = ball_points(rng, 40, 2)
        center = pts[0]
        vec = poincare_distances(center, pts)
        for i in range(40):
            assert vec[i] == poincare_distance(center, pts[i])


class TestEuclideanCosine:
    def test_self_similarity(self):
        assert euclidean_cosine((0.3, 0.7), (0.3, 0.7)) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert euclidean_cosine((1.0, 0.0), (0.0, 2.0)) == 0.0

    def test_hand_value(self):
        assert euclidean_cosine((1.0, 0.0), (1.0, 1.0)) == pytest.approx(
            1.0 / math.sqrt(2), abs=1e-12
        )

    def test_zero_vector_policy(self):
        assert euclidean_cosine((0.0, 0.0), (1.0, 1.0)) == 0.0


class TestLoadEmbeddings:
    def test_direct_parse(self, tmp_path):
        vocab = Vocabulary(terms=["cat", "dog"])
        path = tmp_path / "vec.txt"
        path.write_text("cat 0.1 0.2\n", encoding="utf-8")
        table = load_embeddings(path, vocab)
        assert table.dim == 2
        assert table.covered == {vocab.index["cat"]}
        assert np.allclose(table.vector(vocab.index["cat"]), [0.1, 0.2])

    def test_header_line_is_skipped(self, tmp_path):
        vocab = Vocabulary(terms=["cat"])
        path = tmp_path / "vec.txt"
        path.write_text("1 2\ncat 0.1 0.2\n", encoding="utf-8")
        table = load_embeddings(path, vocab)
        assert table.covered == {0}

    def test_projection_preserves_direction(self, tmp_path):
        vocab = Vocabulary(terms=["far"])
        path = tmp_path / "vec.txt"
        path.write_text("far 1.2 0.0\n", encoding="utf-8")
        table = load_embeddings(path, vocab)
        vec = table.vector(0)
        assert np.linalg.norm(vec) == pytest.approx(0.99999, abs=1e-12)
        assert vec[0] > 0 and vec[1] == 0.0

    def test_euclidean_mode_does_not_project(self, tmp_path):
        vocab = Vocabulary(terms=["far"])
        path = tmp_path / "vec.txt"
        path.write_text("far 1.2 0.0\n", encoding="utf-8")
        table = load_embeddings(path, vocab, "euclidean")
        assert np.linalg.norm(table.vector(0)) == pytest.approx(1.2)

    def test_malformed_line_reports_number(self, tmp_path):
        vocab = Vocabulary(terms=["cat", "dog"])
        path = tmp_path / "vec.txt"
        path.write_text("cat 0.1 0.2\ndog 0.1\n", encoding="utf-8")
        with pytest.raises(EmbeddingParseError, match="line 2"):
            load_embeddings(path, vocab)

    def test_bad_component_reports_number(self, tmp_path):
        vocab = Vocabulary(terms=["cat"])
        path = tmp_path / "vec.txt"
        path.write_text("cat 0.1 oops\n", encoding="utf-8")
        with pytest.raises(EmbeddingParseError, match="line 1"):
            load_embeddings(path, vocab)

    def test_low_coverage_warns_not_fails(self, tmp_path, caplog):
        vocab = Vocabulary(terms=[f"t{i:02d}" for i in range(20)])
        path = tmp_path / "vec.txt"
        path.write_text("t00 0.1 0.0\n", encoding="utf-8")
        with caplog.at_level("WARNING"):
            table = load_embeddings(path, vocab)
        assert table.coverage == pytest.approx(0.05)
        assert any("coverage" in r.message for r in caplog.records)

    def test_uncovered_terms_get_diagonal_only_rows(self, tmp_path):
        table, vocab = table_from_points(
            tmp_path, [(0.0, 0.0), (0.2, 0.0)], terms=["aa", "bb"]
        )
        # add an uncovered vocabulary term by rebuilding with a larger vocab
        vocab3 = Vocabulary(terms=["aa", "bb", "cc"])
        path = write_embedding_file(
            tmp_path / "partial.txt", [("aa", (0.0, 0.0)), ("bb", (0.2, 0.0))]
        )
        table = load_embeddings(path, vocab3)
        ms = build_similarity_matrix(table, k_s=3, alpha=0.0)
        mh = build_hierarchy_matrix(table, k_h=3)
        cc = vocab3.index["cc"]
        assert ms.entries[cc].nnz == 1 and ms.entries[cc, cc] == 1.0
        assert mh.entries[cc].nnz == 1 and mh.entries[cc, cc] == 1.0


class TestKnn:
    def test_collinear_example(self, tmp_path):
        table, vocab = table_from_points(
            tmp_path, [(0.0, 0.0), (0.2, 0.0), (0.8, 0.0)], terms=["pa", "pb", "pc"]
        )
        nbhd = knn(table, vocab.index["pa"], 2)
        assert nbhd.member_indices() == [vocab.index["pa"], vocab.index["pb"]]
        assert nbhd.members[0][1] == 0.0

    def test_saturation(self, tmp_path):
        table, vocab = table_from_points(
            tmp_path, [(0.0, 0.0), (0.2, 0.0), (0.8, 0.0)], terms=["pa", "pb", "pc"]
        )
        nbhd = knn(table, vocab.index["pa"], 99)
        assert len(nbhd.members) == 3

    def test_tie_breaks_toward_lower_index(self, tmp_path):
        # pb and pc are mirror images: equidistant from pa.
        table, vocab = table_from_points(
            tmp_path, [(0.0, 0.0), (0.3, 0.0), (-0.3, 0.0)], terms=["pa", "pb", "pc"]
        )
        nbhd = knn(table, vocab.index["pa"], 2)
        lower = min(vocab.index["pb"], vocab.index["pc"])
        assert nbhd.member_indices() == [vocab.index["pa"], lower]

    def test_uncovered_center_rejected(self, tmp_path):
        vocab = Vocabulary(terms=["aa", "bb"])
        path = write_embedding_file(tmp_path / "e.txt", [("aa", (0.1, 0.0))])
        table = load_embeddings(path, vocab)
        with pytest.raises(ContractError):
            knn(table, vocab.index["bb"], 2)

    def test_distances_nondecreasing(self, tmp_path):
        rng = np.random.default_rng(9)
        points = ball_points(rng, 12, 2)
        table, vocab = table_from_points(
            tmp_path, points, terms=[f"w{i:02d}" for i in range(12)]
        )
        nbhd = knn(table, 0, 12)
        dists = [d for _, d in nbhd.members]
        assert dists == sorted(dists)


def three_point_neighborhood(tmp_path, d01=1.0, d02=2.0, d12=2.5):
    """Place three ball points with the prescribed pairwise distances.

    The first two go on the x axis at hyperbolic ranges d01 and d02 from the
    origin-side point; the third coordinate comes from the closed-form angle
    that realizes d12.
    """
    r1 = math.tanh(d01 / 2.0)
    r2 = math.tanh(d02 / 2.0)
    # |u - v|^2 needed for a target distance D between radii r1, r2:
    want = (math.cosh(d12) - 1.0) * (1 - r1 * r1) * (1 - r2 * r2) / 2.0
    cos_phi = (r1 * r1 + r2 * r2 - want) / (2.0 * r1 * r2)
    phi = math.acos(cos_phi)
    points = [
        (0.0, 0.0),
        (r1, 0.0),
        (r2 * math.cos(phi), r2 * math.sin(phi)),
    ]
    return table_from_points(tmp_path, points, terms=["pw", "px", "py"])


class TestNeighborhoodSimilarity:
    def test_prescribed_distances_example(self, tmp_path):
        table, vocab = three_point_neighborhood(tmp_path)
        center = vocab.index["pw"]
        nbhd = knn(table, center, 3)
        sims = dict(neighborhood_similarity(nbhd, table))
        assert sims[center] == 1.0
        assert sims[vocab.index["px"]] == pytest.approx(1 - 1 / 2.5, abs=1e-9)
        assert sims[vocab.index["py"]] == pytest.approx(1 - 2 / 2.5, abs=1e-9)

    def test_center_similarity_is_one(self, tmp_path):
        rng = np.random.default_rng(4)
        table, vocab = table_from_points(
            tmp_path, ball_points(rng, 6, 2), terms=[f"w{i}" for i in range(6)]
        )
        nbhd = knn(table, 0, 4)
        sims = neighborhood_similarity(nbhd, table)
        assert sims[0] == (0, 1.0)

    def test_two_point_boundary(self, tmp_path):
        table, vocab = table_from_points(tmp_path, [(0.0, 0.0), (0.4, 0.0)], terms=["pa", "pb"])
        nbhd = knn(table, vocab.index["pa"], 2)
        sims = dict(neighborhood_similarity(nbhd, table))
        assert sims[vocab.index["pb"]] == 0.0

    def test_coincident_members_all_one(self, tmp_path):
        table, vocab = table_from_points(
            tmp_path, [(0.1, 0.1), (0.1, 0.1), (0.1, 0.1)], terms=["pa", "pb", "pc"]
        )
        nbhd = knn(table, vocab.index["pa"], 3)
        assert all(s == 1.0 for _, s in neighborhood_similarity(nbhd, table))

    def test_values_in_unit_interval(self, tmp_path):
        rng = np.random.default_rng(6)
        table, vocab = table_from_points(
            tmp_path, ball_points(rng, 15, 3), terms=[f"w{i:02d}" for i in range(15)]
        )
        for w in range(15):
            sims = neighborhood_similarity(knn(table, w, 8), table)
            values = [s for _, s in sims]
            assert min(values) >= 0.0 and max(values) <= 1.0

    def test_needs_two_members(self, tmp_path):
        table, vocab = table_from_points(tmp_path, [(0.0, 0.0)], terms=["pa"])
        nbhd = knn(table, 0, 1)
        with pytest.raises(ContractError):
            neighborhood_similarity(nbhd, table)

    def test_center_max_flag_changes_denominator(self, tmp_path):
        # the prescribed triple: pairwise max 2.5 vs center max 2.0
        table, vocab = three_point_neighborhood(tmp_path)
        nbhd = knn(table, vocab.index["pw"], 3)
        approx = dict(neighborhood_similarity(nbhd, table, center_max=True))
        assert approx[vocab.index["px"]] == pytest.approx(1 - 1 / 2.0, abs=1e-9)
        assert approx[vocab.index["py"]] == pytest.approx(0.0, abs=1e-9)


class TestSimilarityMatrix:
    def test_alpha_zero_keeps_raw_values(self, tmp_path):
        table, vocab = three_point_neighborhood(tmp_path)
        ms = build_similarity_matrix(table, k_s=3, alpha=0.0)
        w = vocab.index["pw"]
        assert ms.entries[w, vocab.index["px"]] == pytest.approx(0.6, abs=1e-9)
        assert ms.entries[w, vocab.index["py"]] == pytest.approx(0.2, abs=1e-9)

    def test_alpha_one_reduces_to_identity(self, tmp_path):
        rng = np.random.default_rng(8)
        table, vocab = table_from_points(
            tmp_path, ball_points(rng, 8, 2), terms=[f"w{i}" for i in range(8)]
        )
        ms = build_similarity_matrix(table, k_s=5, alpha=1.0)
        assert np.array_equal(ms.entries.toarray(), np.eye(8))  # identity on covered terms

    def test_threshold_example(self, tmp_path):
        table, vocab = three_point_neighborhood(tmp_path)
        ms = build_similarity_matrix(table, k_s=3, alpha=0.4)
        w = vocab.index["pw"]
        row = ms.entries[w].toarray().ravel()
        assert row[vocab.index["px"]] == pytest.approx(0.6, abs=1e-9)
        assert row[vocab.index["py"]] == 0.0
        assert row[w] == 1.0

    def test_entries_within_bounds_and_diagonal(self, tmp_path):
        rng = np.random.default_rng(10)
        table, vocab = table_from_points(
            tmp_path, ball_points(rng, 20, 3), terms=[f"w{i:02d}" for i in range(20)]
        )
        ms = build_similarity_matrix(table, k_s=7, alpha=0.2)
        assert ms.entries.data.min() >= 0.0 and ms.entries.data.max() <= 1.0
        assert np.allclose(ms.entries.diagonal(), 1.0)

    def test_raising_alpha_never_adds_nonzeros(self, tmp_path):
        rng = np.random.default_rng(12)
        table, vocab = table_from_points(
            tmp_path, ball_points(rng, 15, 2), terms=[f"w{i:02d}" for i in range(15)]
        )
        nnz = [
            build_similarity_matrix(table, k_s=6, alpha=a).entries.nnz
            for a in (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
        ]
        assert nnz == sorted(nnz, reverse=True)

    def test_euclidean_mode_uses_clamped_cosine(self, tmp_path):
        # opposite vectors: cosine -1 clamps to 0 and falls below any alpha
        table, vocab = table_from_points(
            tmp_path, [(1.0, 0.0), (-1.0, 0.0), (1.0, 0.05)],
            space="euclidean", terms=["pa", "pb", "pc"],
        )
        ms = build_similarity_matrix(table, k_s=3, alpha=0.0)
        pa, pb, pc = vocab.index["pa"], vocab.index["pb"], vocab.index["pc"]
        assert ms.entries[pa, pb] == 0.0
        assert ms.entries[pa, pc] == pytest.approx(
            euclidean_cosine((1.0, 0.0), (1.0, 0.05)), abs=1e-9
        )

    def test_alpha_validation(self, tmp_path):
        table, _ = table_from_points(tmp_path, [(0.0, 0.0), (0.1, 0.0)], terms=["pa", "pb"])
        with pytest.raises(ConfigurationError):
            build_similarity_matrix(table, k_s=2, alpha=1.5)


class TestHierarchyMatrix:
    def test_saturating_k_gives_all_ones(self, tmp_path):
        rng = np.random.default_rng(13)
        table, vocab = table_from_points(
            tmp_path, ball_points(rng, 5, 2), terms=[f"w{i}" for i in range(5)]
        )
        mh = build_hierarchy_matrix(table, k_h=5)
        assert (mh.entries.toarray() == 1).all()

    def test_k_one_is_identity(self, tmp_path):
        rng = np.random.default_rng(14)
        table, vocab = table_from_points(
            tmp_path, ball_points(rng, 5, 2), terms=[f"w{i}" for i in range(5)]
        )
        mh = build_hierarchy_matrix(table, k_h=1)
        assert np.array_equal(mh.entries.toarray(), np.eye(5))

    def test_collinear_rows(self, tmp_path):
        table, vocab = table_from_points(
            tmp_path, [(0.0, 0.0), (0.2, 0.0), (0.8, 0.0)], terms=["pa", "pb", "pc"]
        )
        mh = build_hierarchy_matrix(table, k_h=2)
        pa, pb, pc = (vocab.index[t] for t in ("pa", "pb", "pc"))
        assert set(mh.entries[pa].indices) == {pa, pb}
        assert set(mh.entries[pc].indices) == {pc, pb}

    def test_binary_with_full_diagonal(self, tmp_path):
        rng = np.random.default_rng(15)
        table, vocab = table_from_points(
            tmp_path, ball_points(rng, 12, 3), terms=[f"w{i:02d}" for i in range(12)]
        )
        mh = build_hierarchy_matrix(table, k_h=4)
        assert set(np.unique(mh.entries.data)) == {1.0}
        assert np.allclose(mh.entries.diagonal(), 1.0)

    def test_raising_k_never_removes_nonzeros(self, tmp_path):
        rng = np.random.default_rng(16)
        table, vocab = table_from_points(
            tmp_path, ball_points(rng, 12, 2), terms=[f"w{i:02d}" for i in range(12)]
        )
        nnz = [build_hierarchy_matrix(table, k_h=k).entries.nnz for k in (1, 3, 6, 9, 12)]
        assert nnz == sorted(nnz)


class TestParallelBuilds:
    def test_threaded_builds_match_sequential(self, tmp_path):
        rng = np.random.default_rng(18)
        table, vocab = table_from_points(
            tmp_path, ball_points(rng, 25, 3), terms=[f"w{i:02d}" for i in range(25)]
        )
        seq_ms = build_similarity_matrix(table, k_s=8, alpha=0.3)
        par_ms = build_similarity_matrix(table, k_s=8, alpha=0.3, workers=4)
        assert np.array_equal(seq_ms.entries.indptr, par_ms.entries.indptr)
        assert np.array_equal(seq_ms.entries.indices, par_ms.entries.indices)
        assert np.array_equal(seq_ms.entries.data, par_ms.entries.data)
        seq_mh = build_hierarchy_matrix(table, k_h=6)
        par_mh = build_hierarchy_matrix(table, k_h=6, workers=4)
        assert np.array_equal(seq_mh.entries.toarray(), par_mh.entries.toarray())


class TestEuclideanMode:
    def test_knn_uses_cosine_distance(self, tmp_path):
        # pc points near pa's direction; pb is longer but less aligned.
        table, vocab = table_from_points(
            tmp_path, [(1.0, 0.0), (0.5, 0.8), (2.0, 0.1)],
            space="euclidean", terms=["pa", "pb", "pc"],
        )
        nbhd = knn(table, vocab.index["pa"], 2)
        assert nbhd.member_indices() == [vocab.index["pa"], vocab.index["pc"]]

    def test_duplicate_embedding_line_keeps_first(self, tmp_path):
        vocab = Vocabulary(terms=["cat"])
        path = tmp_path / "vec.txt"
        path.write_text("cat 0.1 0.0\ncat 0.5 0.5\n", encoding="utf-8")
        table = load_embeddings(path, vocab)
        assert np.allclose(table.vector(0), [0.1, 0.0])


class TestSparseIo:
    def test_triplet_round_trip_is_bitwise(self, tmp_path):
        rng = np.random.default_rng(17)
        from scipy import sparse

        matrix = sparse.random(30, 40, density=0.2, random_state=1).tocsr()
        path = tmp_path / "m.bin"
        save_triplets(path, matrix)
        loaded = load_triplets(path, (30, 40))
        assert (loaded != matrix).nnz == 0
        assert np.array_equal(loaded.data, matrix.tocsr().data)

    def test_cache_store_and_hit(self, tmp_path):
        from scipy import sparse

        cache = MatrixCache(tmp_path / "cache")
        matrix = sparse.random(10, 10, density=0.3, random_state=2).tocsr()
        key = cache_key("similarity", corpus="abc", alpha=0.1)
        assert cache.load(key, (10, 10)) is None
        cache.save(key, matrix)
        again = cache.load(key, (10, 10))
        assert (again != matrix).nnz == 0

    def test_cache_key_depends_on_parameters(self):
        k1 = cache_key("similarity", corpus="abc", alpha=0.1)
        k2 = cache_key("similarity", corpus="abc", alpha=0.2)
        k3 = cache_key("hierarchy", corpus="abc", alpha=0.1)
        assert len({k1, k2, k3}) == 3
        assert k1 == cache_key("similarity", alpha=0.1, corpus="abc")
