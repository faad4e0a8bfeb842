import time


def pytest_sessionstart(session):
    session.config.suite_started = time.perf_counter()


def pytest_collection_modifyitems(session, config, items):
    # run the acceptance criteria last so the runtime check covers the whole suite
    items.sort(key=lambda item: item.fspath.basename == "test_acceptance.py")
