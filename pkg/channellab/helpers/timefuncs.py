import pendulum


def utc_stamp() -> str:
    """Current UTC time as an ISO-8601 string."""
    return pendulum.now("UTC").to_iso8601_string()


def start_clock() -> pendulum.DateTime:
    return pendulum.now("UTC")


def elapsed_seconds(start: pendulum.DateTime) -> float:
    """
    Seconds elapsed since ``start``

    Args: start - a time returned by start_clock

    Returns: the duration in seconds as a float
    """
    return (pendulum.now("UTC") - start).total_seconds()
