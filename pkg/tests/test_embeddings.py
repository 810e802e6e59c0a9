from __future__ import annotations

import math
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import json

import numpy as np
import pytest

from replykit.embeddings import (
    EmbeddingMatrix,
    EncoderSpec,
    ExternalEncoderError,
    WordVectorFormatError,
    cosine,
    cosine_knn,
    embed,
    fit_tfidf,
    load_word_vectors,
)
from tests.conftest import make_matrix, make_table


def make_wv(entries: dict[str, list[float]]):
    from replykit.embeddings import WordVectorTable

    arrays = {k: np.array(v, dtype=float) for k, v in entries.items()}
    dim = len(next(iter(arrays.values())))
    return WordVectorTable(dimension=dim, entries=arrays)


class TestFitTfidf:
    def test_hand_computed_idf(self):
        model = fit_tfidf(make_table(["a b", "a"]))
        assert model.idf_of("a") == pytest.approx(1.0, abs=1e-12)
        assert model.idf_of("b") == pytest.approx(math.log(3 / 2) + 1, abs=1e-12)

    def test_single_response(self):
        model = fit_tfidf(make_table(["x"]))
        assert model.idf_of("x") == pytest.approx(1.0, abs=1e-12)

    def test_empty_table_errors(self):
        with pytest.raises(ValueError):
            fit_tfidf(make_table([]))

    def test_unknown_token_has_no_idf(self):
        model = fit_tfidf(make_table(["a"]))
        assert model.idf_of("zzz") is None


class TestLoadWordVectors:
    def test_basic(self, tmp_path):
        path = tmp_path / "wv.txt"
        path.write_text("a 1 0 0\nb 0 1 0\n")
        wv = load_word_vectors(path)
        assert wv.dimension == 3
        assert set(wv.entries) == {"a", "b"}

    def test_dimension_mismatch_names_line(self, tmp_path):
        path = tmp_path / "wv.txt"
        path.write_text("a 1 0 0\nb 0 1\n")
        with pytest.raises(WordVectorFormatError, match="line 2"):
            load_word_vectors(path)

    def test_empty_file_errors(self, tmp_path):
        path = tmp_path / "wv.txt"
        path.write_text("")
        with pytest.raises(WordVectorFormatError, match="dimension undefined"):
            load_word_vectors(path)

    def test_duplicate_token_last_wins(self, tmp_path):
        path = tmp_path / "wv.txt"
        path.write_text("a 1 0\na 0 1\n")
        wv = load_word_vectors(path)
        assert np.allclose(wv.entries["a"], [0, 1])

    def test_non_numeric_errors(self, tmp_path):
        path = tmp_path / "wv.txt"
        path.write_text("a x y\n")
        with pytest.raises(WordVectorFormatError, match="line 1"):
            load_word_vectors(path)


class TestEmbed:
    def test_avg_wordvec_occurrence_weighted(self):
        table = make_table(["a a b"])
        wv = make_wv({"a": [1, 0], "b": [0, 1]})
        mat = embed(table, EncoderSpec(kind="avg_wordvec"), wv=wv)
        assert np.allclose(mat.vectors[0], [2 / 3, 1 / 3])

    def test_tfidf_weighted_wordvec_hand_computed(self):
        # tf(a)=2, tf(b)=1, idf(a)=1, idf(b)=2 -> (2*1*(1,0) + 1*2*(0,1)) / 4
        from replykit.embeddings import TfidfModel

        table = make_table(["a a b"])
        tfidf = TfidfModel(vocabulary={"a": 0, "b": 1}, idf=np.array([1.0, 2.0]))
        wv = make_wv({"a": [1, 0], "b": [0, 1]})
        mat = embed(table, EncoderSpec(kind="tfidf_weighted_wordvec"), tfidf=tfidf, wv=wv)
        assert np.allclose(mat.vectors[0], [0.5, 0.5])

    def test_tfidf_rows_are_tf_times_idf(self):
        table = make_table(["a a b", "a"])
        tfidf = fit_tfidf(table)
        mat = embed(table, EncoderSpec(kind="tfidf"), tfidf=tfidf)
        row = mat.vectors[0].toarray().ravel()
        assert row[tfidf.vocabulary["a"]] == pytest.approx(2 * tfidf.idf_of("a"))
        assert row[tfidf.vocabulary["b"]] == pytest.approx(1 * tfidf.idf_of("b"))

    def test_all_oov_gets_flagged_unit_fallback(self):
        table = make_table(["zzz qqq", "a"])
        wv = make_wv({"a": [1.0, 0.0]})
        mat = embed(table, EncoderSpec(kind="avg_wordvec"), wv=wv)
        assert mat.oov_flags[0] and not mat.oov_flags[1]
        assert np.linalg.norm(mat.vectors[0]) == pytest.approx(1.0)

    def test_fallback_deterministic_by_response_id(self):
        table = make_table(["zzz", "a"])
        wv = make_wv({"a": [1.0, 0.0]})
        m1 = embed(table, EncoderSpec(kind="avg_wordvec"), wv=wv)
        m2 = embed(table, EncoderSpec(kind="avg_wordvec"), wv=wv)
        assert np.array_equal(m1.vectors[0], m2.vectors[0])

    def test_token_missing_from_tfidf_vocab_ignored(self):
        from replykit.embeddings import TfidfModel

        table = make_table(["a novel"])  # "novel" has no idf entry
        tfidf = TfidfModel(vocabulary={"a": 0}, idf=np.array([1.0]))
        wv = make_wv({"a": [1, 0], "novel": [0, 1]})
        mat = embed(table, EncoderSpec(kind="tfidf_weighted_wordvec"), tfidf=tfidf, wv=wv)
        assert np.allclose(mat.vectors[0], [1, 0])

    def test_missing_inputs_rejected(self):
        table = make_table(["a"])
        with pytest.raises(ValueError):
            embed(table, EncoderSpec(kind="tfidf"))
        with pytest.raises(ValueError):
            embed(table, EncoderSpec(kind="avg_wordvec"))

    def test_tfidf_weighted_reduces_to_avg_when_idf_uniform(self):
        # single-occurrence tokens and equal idf: weighted mean == plain mean
        table = make_table(["a b", "c d"])
        tfidf = fit_tfidf(table)  # every token df=1 -> identical idf
        wv = make_wv({"a": [1, 0], "b": [0, 1], "c": [1, 1], "d": [2, 0]})
        weighted = embed(table, EncoderSpec(kind="tfidf_weighted_wordvec"), tfidf=tfidf, wv=wv)
        plain = embed(table, EncoderSpec(kind="avg_wordvec"), wv=wv)
        assert np.max(np.abs(weighted.vectors - plain.vectors)) < 1e-12


class TestCosineKnn:
    def test_identical_vector_wins(self):
        mat = make_matrix([[1, 0], [1, 0], [0, 1]])
        assert cosine_knn(mat, 0, 1) == [(1, pytest.approx(1.0))]

    def test_k2_brute_force_example(self):
        mat = make_matrix([[1, 0], [1, 0], [0, 1]])
        got = cosine_knn(mat, 0, 2)
        assert [i for i, _ in got] == [1, 2]
        assert got[0][1] == pytest.approx(1.0)
        assert got[1][1] == pytest.approx(0.0)

    def test_closed_form_cosine(self):
        v = [1 / math.sqrt(2), 1 / math.sqrt(2)]
        mat = make_matrix([[1, 0], v])
        assert cosine(mat, 0, 1) == pytest.approx(math.sqrt(2) / 2, abs=1e-12)

    def test_k_clamped_to_population(self):
        mat = make_matrix([[1, 0], [0, 1]])
        assert len(cosine_knn(mat, 0, 10)) == 1

    def test_ties_break_by_ascending_id(self):
        mat = make_matrix([[1, 0], [0, 1], [0, 1], [0, 1]])
        got = cosine_knn(mat, 0, 3)
        assert [i for i, _ in got] == [1, 2, 3]

    def test_invalid_inputs(self):
        mat = make_matrix([[1, 0], [0, 1]])
        with pytest.raises(ValueError):
            cosine_knn(mat, 0, 0)
        with pytest.raises(ValueError):
            cosine_knn(mat, 5, 1)

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            n, d = int(rng.integers(2, 40)), int(rng.integers(1, 8))
            mat = make_matrix(rng.standard_normal((n, d)).tolist())
            k = int(rng.integers(1, n))
            query = int(rng.integers(n))
            got = [i for i, _ in cosine_knn(mat, query, k)]
            sims = [
                (-cosine(mat, query, j), j) for j in range(n) if j != query
            ]
            expected = [j for _, j in sorted(sims)[:k]]
            assert got == expected

    def test_cosine_properties(self):
        rng = np.random.default_rng(1)
        mat = make_matrix(rng.standard_normal((12, 5)).tolist())
        for i in range(12):
            assert cosine(mat, i, i) == pytest.approx(1.0, abs=1e-9)
            for j in range(12):
                assert cosine(mat, i, j) == pytest.approx(cosine(mat, j, i), abs=1e-12)
                assert abs(cosine(mat, i, j)) <= 1 + 1e-9

    def test_sparse_and_dense_paths_agree(self):
        from scipy import sparse

        rng = np.random.default_rng(2)
        dense_rows = rng.random((8, 6)) * (rng.random((8, 6)) > 0.5)
        dense_rows[dense_rows.sum(axis=1) == 0, 0] = 1.0
        dense = make_matrix(dense_rows.tolist())
        spec = EncoderSpec(kind="tfidf")
        sp = EmbeddingMatrix(encoder=spec, vectors=sparse.csr_matrix(dense_rows))
        for q in range(8):
            got_dense, got_sparse = cosine_knn(dense, q, 3), cosine_knn(sp, q, 3)
            assert [i for i, _ in got_dense] == [i for i, _ in got_sparse]
            assert [s for _, s in got_dense] == pytest.approx([s for _, s in got_sparse], abs=1e-12)


class _EncodeHandler(BaseHTTPRequestHandler):
    fail_first = 0
    bad_dimension = False
    calls = 0

    def do_POST(self):
        cls = type(self)
        cls.calls += 1
        if cls.fail_first > 0:
            cls.fail_first -= 1
            self.send_response(500)
            self.end_headers()
            return
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        texts = body["texts"]
        dim = 2 if not cls.bad_dimension else 3
        vectors = [[float(len(t)), 1.0] if dim == 2 else [1.0, 1.0, 1.0] for t in texts]
        payload = json.dumps({"dimension": dim if not cls.bad_dimension else 2, "vectors": vectors})
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(payload.encode())

    def log_message(self, *args):  # keep test output quiet
        pass


@pytest.fixture
def encode_server():
    _EncodeHandler.fail_first = 0
    _EncodeHandler.bad_dimension = False
    _EncodeHandler.calls = 0
    server = ThreadingHTTPServer(("127.0.0.1", 0), _EncodeHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()


class TestExternalEncoder:
    def test_round_trip(self, encode_server):
        table = make_table(["abc", "de"])
        mat = embed(table, EncoderSpec(kind="external", endpoint=encode_server))
        assert np.allclose(mat.vectors, [[3, 1], [2, 1]])

    def test_retry_then_succeed(self, encode_server):
        _EncodeHandler.fail_first = 2
        table = make_table(["abc"])
        mat = embed(table, EncoderSpec(kind="external", endpoint=encode_server))
        assert np.allclose(mat.vectors, [[3, 1]])
        assert _EncodeHandler.calls == 3

    def test_unreachable_after_retries(self, encode_server):
        _EncodeHandler.fail_first = 99
        table = make_table(["abc"])
        with pytest.raises(ExternalEncoderError, match="unreachable"):
            embed(table, EncoderSpec(kind="external", endpoint=encode_server, max_retries=2))

    def test_dimension_mismatch_errors(self, encode_server):
        _EncodeHandler.bad_dimension = True
        table = make_table(["abc"])
        with pytest.raises(ExternalEncoderError, match="dimension"):
            embed(table, EncoderSpec(kind="external", endpoint=encode_server))

    def test_spec_requires_endpoint(self):
        with pytest.raises(ValueError):
            EncoderSpec(kind="external")
