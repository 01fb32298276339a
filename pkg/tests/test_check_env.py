from app.utils import check_env


def test_version_tuple():
    assert check_env._version_tuple("1.26.4") == (1, 26)
    assert check_env._version_tuple("2.0rc1") == (2, 0)
    assert check_env._version_tuple("3") == (3, 0)
    assert check_env._version_tuple("1.27rc2") == (1, 27)
    assert check_env._version_tuple("3.2.1") == (3, 2)


def test_packages_and_settings():
    assert check_env.check_packages()
    assert check_env.check_settings()


def test_check_environment_creates_directories(tmp_path, monkeypatch):
    monkeypatch.setattr(check_env, "OUTPUT_DIR", str(tmp_path / "results"))
    monkeypatch.setattr(check_env, "LOG_FILE", str(tmp_path / "logs" / "ustlab.log"))
    assert check_env.check_environment()
    assert (tmp_path / "results").is_dir()
    assert (tmp_path / "logs").is_dir()
