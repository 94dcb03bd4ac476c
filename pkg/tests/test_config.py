import pytest

from adaptive_pipelines import _canonical
from adaptive_pipelines.config import ProjectConfig
from adaptive_pipelines.errors import ErrorType
from adaptive_pipelines.exceptions import ConfigError
from adaptive_pipelines.model import DType


def test_defaults():
    cfg = ProjectConfig.from_dict({})
    assert cfg.assertion_slack == 0.05 and cfg.null_margin == 0.1
    assert cfg.adaptation.tau == 0.05 and cfg.adaptation.rename_delta == 0.25
    assert cfg.optimizer.strategy == "beam" and cfg.optimizer.width == 8
    assert cfg.detection.outlier_method == "zscore"


def test_round_trip():
    doc = {"constraints": {"intervals": {"x": [0, 10]}, "domains": {"g": ["a", "b"]}},
           "weights": {"weights": {"x|missing_value": 2.0}},
           "type_overrides": {"g": "categorical"}, "missing_tokens": ["", "NA"],
           "optimizer": {"strategy": "exhaustive", "budget": 50,
                         "rules": [{"id": "no-lof", "algorithms": ["flag_lof"]}]},
           "adaptation": {"enabled": False, "tau": 0.1}, "granularity": "schema"}
    cfg = ProjectConfig.from_dict(doc)
    assert cfg.constraints.intervals["x"] == (0, 10) and cfg.type_overrides == {"g": DType.CATEGORICAL}
    assert cfg.weights.weight(("x", ErrorType.MISSING_VALUE)) == 2.0
    again = ProjectConfig.from_dict(_canonical.loads(_canonical.dumps(cfg.to_dict())))
    assert _canonical.dumps(again.to_dict()) == _canonical.dumps(cfg.to_dict())


@pytest.mark.parametrize("doc, path", [
    ({"bogus": 1}, "$.bogus"),
    ({"adaptation": {"tau": "high"}}, "$.adaptation.tau"),
    ({"adaptation": {"tau": -1}}, "$.adaptation.tau"),
    ({"adaptation": {"enabled": 1}}, "$.adaptation.enabled"),
    ({"optimizer": {"width": 0}}, "$.optimizer.width"),
    ({"optimizer": {"width": True}}, "$.optimizer.width"),
    ({"optimizer": {"strategy": "greedy"}}, "$.optimizer.strategy"),
    ({"optimizer": {"rules": [{"algorithms": []}]}}, "$.optimizer.rules[0]"),
    ({"optimizer": {"best_practices": [{"kind": "magic"}]}}, "$.optimizer.best_practices[0].kind"),
    ({"constraints": {"intervals": {"x": [5, 1]}}}, "$.constraints.intervals.x"),
    ({"constraints": {"intervals": {"x": [0]}}}, "$.constraints.intervals.x"),
    ({"constraints": {"domains": {"g": [1, 2]}}}, "$.constraints.domains.g"),
    ({"type_overrides": {"g": "blob"}}, "$.type_overrides.g"),
    ({"detection": {"outlier_method": "lof"}}, "$.detection.outlier_method"),
    ({"granularity": "coarse"}, "$.granularity"),
    ({"weights": {"weights": {"x|nonsense": 1.0}}}, "$.weights"),
    ({"profile": []}, "$.profile"),
])
def test_errors_name_the_field(doc, path):
    with pytest.raises(ConfigError) as err:
        ProjectConfig.from_dict(doc)
    assert err.value.path == path and str(err.value).startswith(path)


def test_top_level_must_be_object():
    with pytest.raises(ConfigError):
        ProjectConfig.from_dict([1, 2])
