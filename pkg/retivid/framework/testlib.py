from retivid.framework.pytest_customization.marks import *  # noqa: F403


@pytest.mark.usefixtures('reset_config')  # noqa: F405
class BaseTest:
    """
    Base test class for our testing.
    If some functionality/property needs to be implemented in all test classes
    here is the place to put your code.
    """
    pass


@tier1  # noqa: F405
class SanityTest(BaseTest):
    """
    Base class for the property and oracle suites
    """
    pass


@tier2  # noqa: F405
@acceptance  # noqa: F405
class AcceptanceTest(BaseTest):
    """
    Base class for the desk scale training runs
    """
    pass
