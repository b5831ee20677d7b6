from unittest.mock import patch

import pytest

import main


def test_run_app_exits_with_dispatch_code():
    with patch("main.cli_dispatch", return_value=2) as mock_dispatch, patch("sys.argv", ["progtune", "count"]):
        with pytest.raises(SystemExit) as exc:
            main.run_app()

    assert exc.value.code == 2
    assert mock_dispatch.call_args.args == (["count"],)


def test_run_app_count_end_to_end(capsys):
    with patch("sys.argv", ["progtune", "count", "--arch", "bert-base", "--epochs", "3", "--json"]):
        with pytest.raises(SystemExit) as exc:
            main.run_app()

    assert exc.value.code == 0
    assert '"cumulative": ' in capsys.readouterr().out
