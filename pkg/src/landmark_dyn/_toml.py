try:
    from tomllib import loads, load  # noqa: F401
    from tomllib import TOMLDecodeError  # noqa: F401
except ImportError:  # Python < 3.11
    from tomli import loads, load, TOMLDecodeError  # noqa: F401
