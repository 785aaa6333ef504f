from pathlib import Path

import pytest

from ncdw.core.errors import ConfigError, KeyMaterialError, StorageError
from ncdw.ingest.descriptor import SourceKind
from ncdw.utils.config import NcdwConfig, load_config, resolve_link_key

CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"
HEX_KEY = bytes(range(32)).hex()


def test_sample_configuration():
    config = load_config(CONFIG_DIR / "ncdw.toml")
    assert [source.id for source in config.sources] == ["dmch", "popular_dc", "bmd"]
    assert config.source("bmd").kind == SourceKind.METEOROLOGY
    assert config.source("dmch").code_map == CONFIG_DIR / "code_map.csv"
    assert config.warehouse_root == CONFIG_DIR / "../ncdw-warehouse"
    assert config.capacity.r_bar is None
    descriptor = config.source("popular_dc").to_descriptor()
    assert descriptor.zone_offset_minutes == 360


def test_defaults_without_a_file():
    config = load_config()
    assert config.sources == []
    assert config.link_key_env == "NCDW_LINK_KEY"
    with pytest.raises(ConfigError):
        config.source("dmch")


def test_bad_documents(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("warehouse_root = \n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(path)
    path.write_text("unknown_option = 1\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(path)
    path.write_text(
        "[[sources]]\nid = 'a'\nkind = 'hospital'\nfield_map = {}\n"
        "[[sources]]\nid = 'a'\nkind = 'meteorology'\nfield_map = {}\n",
        encoding="utf-8",
    )
    with pytest.raises(ConfigError, match="duplicate"):
        load_config(path)
    with pytest.raises(StorageError):
        load_config(tmp_path / "missing.toml")


def test_link_key_order(tmp_path):
    key_file = tmp_path / "key.hex"
    key_file.write_text("ff" * 16 + "\n", encoding="utf-8")
    environ = {"NCDW_LINK_KEY": HEX_KEY}
    assert resolve_link_key(environ=environ) == bytes(range(32))
    assert resolve_link_key(key_file, environ=environ) == b"\xff" * 16
    configured = NcdwConfig(link_key_file=key_file)
    assert resolve_link_key(config=configured, environ=environ) == b"\xff" * 16
    custom = NcdwConfig(link_key_env="OTHER_KEY")
    assert resolve_link_key(config=custom, environ={"OTHER_KEY": HEX_KEY}) == bytes(range(32))


def test_link_key_errors(tmp_path):
    with pytest.raises(KeyMaterialError):
        resolve_link_key(environ={})
    with pytest.raises(KeyMaterialError):
        resolve_link_key(environ={"NCDW_LINK_KEY": "not hex"})
    with pytest.raises(KeyMaterialError):
        resolve_link_key(environ={"NCDW_LINK_KEY": "abcd"})
    with pytest.raises(StorageError):
        resolve_link_key(tmp_path / "absent.hex", environ={})
