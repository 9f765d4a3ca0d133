"""Estimator front end: sklearn conventions and end-to-end behavior."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from xsr.errors import ContractError
from xsr.model import CodeSwitchRetriever


@pytest.fixture(scope="module")
def fitted(bench_module):
    bench = bench_module
    model = CodeSwitchRetriever(dictionaries=[bench.dictionary], d_model=32, n_layers=2,
                                n_heads=4, d_ff=64, max_len=12, vocab_size=512,
                                learning_rate=1e-3, batch_size=16, pretrain_steps=150,
                                finetune_steps=100, seed=0)
    return model.fit(bench.kb_rows()), bench


@pytest.fixture(scope="module")
def bench_module():
    from xsr.synthetic import make_benchmark
    return make_benchmark()


class TestSklearnConventions:
    def test_get_set_params_round_trip(self):
        model = CodeSwitchRetriever(cmd_rate=0.25, lam=0.3)
        params = model.get_params()
        assert params["cmd_rate"] == 0.25 and params["lam"] == 0.3
        model.set_params(cmd_rate=0.1)
        assert model.cmd_rate == 0.1

    def test_clone(self):
        model = CodeSwitchRetriever(pretrain_steps=7, seed=5)
        twin = clone(model)
        assert twin.pretrain_steps == 7 and twin.seed == 5

    def test_not_fitted_errors(self):
        model = CodeSwitchRetriever()
        with pytest.raises(NotFittedError):
            model.predict(["anything"])
        with pytest.raises(NotFittedError):
            model.transform(["anything"])

    def test_input_validation(self):
        model = CodeSwitchRetriever()
        with pytest.raises(ContractError):
            model.fit([])
        with pytest.raises(ContractError):
            model.fit([("only-query",)])
        with pytest.raises(ContractError):
            model.fit([(1, 2)])


class TestFittedBehavior:
    def test_predict_hits_gold(self, fitted):
        model, bench = fitted
        queries = [q.text for q in bench.test_mono]
        preds = model.predict(queries)
        hits = sum(int(p in q.gold_ids) for p, q in zip(preds, bench.test_mono))
        assert hits / len(queries) > 0.5

    def test_score_matches_manual_accuracy(self, fitted):
        model, bench = fitted
        queries = [q.text for q in bench.test_mono[:20]]
        gold = [q.gold_ids for q in bench.test_mono[:20]]
        preds = model.predict(queries)
        manual = sum(int(p in g) for p, g in zip(preds, gold)) / len(queries)
        assert model.score(queries, gold) == manual

    def test_transform_shape(self, fitted):
        model, bench = fitted
        vecs = model.transform(["w000 w001 guide", "f00 f01"])
        assert vecs.shape == (2, model.d_model)
        assert np.all(np.isfinite(vecs))

    def test_retrieve_ranked(self, fitted):
        model, _ = fitted
        res = model.retrieve(["w000 w001 guide"], k=5)[0]
        assert len(res.hits) == 5
        scores = res.scores()
        assert all(a >= b for a, b in zip(scores, scores[1:]))

    def test_stored_query_scores_one(self, fitted):
        model, bench = fitted
        text = bench.kb.entries[0].query
        res = model.retrieve([text], k=1)[0]
        assert abs(res.hits[0][1] - 1.0) <= 1e-9
