import pytest
from pydantic import ValidationError

from app.models.experiment import ExperimentConfig
from app.models.family import FamilySpec
from app.models.records import ForestRecord, NetworkRecord, StatReport, WalkRecord


def test_experiment_config_defaults():
    """Test creating an ExperimentConfig with only what the kind needs."""

    config = ExperimentConfig(kind="counterexample")

    # Check defaults
    assert config.k == 4
    assert config.m == 1
    assert config.stretch == "reduced"
    assert config.format == "json"
    assert config.threads == 1
    assert config.quotient.mode == "frontier"
    assert config.family is None


def test_experiment_config_nested_family():
    """Test that nested family dicts are validated into a FamilySpec."""

    config = ExperimentConfig.model_validate({
        "kind": "hitting",
        "family": {"family": "grid_box", "d": 3, "radius": 4},
        "K": [[0, 0, 0]],
        "window": [0.0, 0.1],
    })

    assert isinstance(config.family, FamilySpec)
    assert config.family.radius == 4
    assert config.window == (0.0, 0.1)


def test_experiment_config_requirements():
    """Test that each kind rejects a config missing what it needs."""

    # Sampling kinds need a family
    with pytest.raises(ValidationError):
        ExperimentConfig(kind="sample_ust")

    grid = {"family": "grid_box", "radius": 2}

    # Hitting needs K
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate({"kind": "hitting", "family": grid})

    # Dynamics needs a nonincreasing grid
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate({"kind": "dynamics", "family": grid})
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate({"kind": "dynamics", "family": grid, "t_grid": [0.0, 1.0]})

    # Windows run forward
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate({"kind": "sample_interlacement", "family": grid, "window": [1.0, 0.0]})

    # Unknown kinds and negative seeds are rejected
    with pytest.raises(ValidationError):
        ExperimentConfig(kind="simulate")
    with pytest.raises(ValidationError):
        ExperimentConfig(kind="verify", seed=-1)


def test_stat_report_alias():
    """Test that StatReport writes `pass` and accepts either name."""

    report = StatReport(test="law", statistic=1.5, p_value=0.2, passed=True)
    assert report.model_dump(by_alias=True)["pass"] is True

    parsed = StatReport.model_validate({"test": "law", "pass": False})
    assert parsed.passed is False
    assert parsed.details == {}


def test_network_record_rejects_bad_conductance():
    """Test that edge records need a positive conductance."""

    with pytest.raises(ValidationError):
        NetworkRecord.model_validate({"vertices": 2, "edges": [{"a": 0, "b": 1, "c": 0.0, "id": 0}]})


def test_schema_examples_validate():
    """Test that the JSON schema examples are valid records."""

    for model in (WalkRecord, ForestRecord, ExperimentConfig, FamilySpec):
        example = model.model_json_schema()["example"]
        model.model_validate(example)
