import doctest

import zvmc.adaptive


def test_docstring_examples():
    result = doctest.testmod(zvmc.adaptive)
    assert result.attempted > 0 and result.failed == 0
