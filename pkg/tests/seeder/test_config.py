from pathlib import Path

import pytest

from seeder.choke import DEFAULT_UNCHOKED_FRACTION
from seeder.config import PEER_ID_PREFIX, SeederConfig, load_config
from seeder.content import DEFAULT_PIECE_LENGTH

THIS_DIR = Path(__file__).parent
FILENAME = THIS_DIR / "seeder.cfg"


def test_defaults():
    config = SeederConfig()
    assert config.port == 6881
    assert config.piece_length == DEFAULT_PIECE_LENGTH == 262144
    assert config.unchoked_fraction == DEFAULT_UNCHOKED_FRACTION == 0.10  # noqa: FURB152
    assert config.idle_timeout_ms == 30_000
    assert config.handshake_timeout_ms == 3_000
    assert config.choke_tick_ms == 1_000
    assert not config.stats
    assert len(config.peer_id) == 20
    assert config.peer_id.startswith(PEER_ID_PREFIX)
    assert SeederConfig().peer_id != config.peer_id


def test_load_config():
    config = load_config(FILENAME)
    assert config.file == Path("content.bin")
    assert config.host == "127.0.0.1"
    assert config.port == 7000
    assert config.piece_length == 65536
    assert config.unchoked_fraction == 0.25  # noqa: FURB152
    assert config.choke_tick_ms == 250
    assert config.idle_timeout_ms == 2000
    assert config.handshake_timeout_ms == 3_000
    assert config.stats is True
    assert config.peer_id == b"-HS0100-0123456789ab"


def test_replace_skips_none():
    config = load_config(FILENAME).replace(port=None, choke_tick_ms=10, stats=None)
    assert config.port == 7000
    assert config.choke_tick_ms == 10
    assert config.stats is True


@pytest.mark.parametrize(
    ("changes", "match"),
    [
        ({"peer_id": b"short"}, r"Peer ID must be 20 bytes long"),
        ({"port": 70_000}, r"Invalid port 70000"),
        ({"unchoked_fraction": 0}, r"in \(0, 1\]"),
        ({"idle_timeout_ms": 0}, r"idle_timeout_ms must be positive"),
        ({"choke_tick_ms": -5}, r"choke_tick_ms must be positive"),
    ],
)
def test_invalid_settings(changes, match):
    with pytest.raises(ValueError, match=match):
        SeederConfig().replace(**changes)


def test_unknown_setting(tmp_path):
    path = tmp_path / "typo.cfg"
    path.write_text("port = 1\nchoke_tick = 5\n")
    with pytest.raises(ValueError, match=r"Unknown seeder settings: choke_tick"):
        load_config(path)


def test_repeated_setting(tmp_path):
    path = tmp_path / "twice.cfg"
    path.write_text("port = 1\nport = 2\n")
    with pytest.raises(ValueError, match=r"sets port more than once"):
        load_config(path)
