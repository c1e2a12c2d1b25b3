import logging.config
import math
import os
import sys
from os.path import dirname, expanduser, join

from pyhocon import ConfigFactory, ConfigParser, ConfigTree, HOCONConverter

from jtcomp.errors import ConfigurationError

CONFIG_NAME = "jtcomp.conf"
REFERENCE_CONF = join(dirname(dirname(os.path.abspath(__file__))), "reference.conf")


def get_parents(leaf, include_leaf=False):
    """Yield the ancestors of `leaf` from the innermost directory up to the filesystem root."""
    if include_leaf:
        yield leaf
    current = leaf
    while dirname(current) != current:
        current = dirname(current)
        yield current


def find_files(name, cwd):
    """
    Candidate locations of the config file `name`, least specific first so that later files win when merging:
    the dotted and plain file in the home directory, then `name` in every directory from / down to
    `cwd` and finally `cwd/instance/name`.
    """
    search = reversed(list(get_parents(join(cwd, "instance"), include_leaf=True)))
    home = expanduser("~")
    return [join(home, "." + name), join(home, name)] + [join(directory, name) for directory in search]


def load_config(cwd=None, files=(), overrides=(), debug=False):
    """
    Build the configuration tree of a run by merging, from lowest to highest precedence:
    - the packaged defaults in jtcomp/reference.conf,
    - every "jtcomp.conf" returned by find_files() for `cwd`,
    - the explicitly given HOCON `files` (e.g. an experiment file passed on the command line),
    - `overrides`, a sequence of HOCON snippets like "ssocp.max_retries = 20" or "thresholds_db = [3, inf]".

    Flat files such as
        num_bs = 3
        n_t = 1
        cell_edge_snr_db = 15
    are valid HOCON, as are nested blocks (ssocp { max_retries = 20 }).

    If the merged config contains a key "logging", it is used to reconfigure python logging via dictConfig.
    """
    if cwd is None:
        cwd = os.getcwd()
    found = [file for file in find_files(CONFIG_NAME, cwd) if os.path.isfile(file)]
    for file in files:
        if not os.path.isfile(file):
            raise ConfigurationError("config_file", "config file {} does not exist".format(file))
    if debug:
        print("Config files:\n" + "\n".join([REFERENCE_CONF] + found + list(files)))

    configs = [ConfigFactory.parse_file(REFERENCE_CONF, resolve=False)]
    configs += [ConfigFactory.parse_file(file, resolve=False) for file in found + list(files)]
    if overrides:
        configs.append(ConfigFactory.parse_string("\n".join(overrides), resolve=False))

    config = ConfigTree(root=True)
    config.put("__cwd__", os.path.abspath(cwd))
    for c in configs:
        config = ConfigTree.merge_configs(config, c)
    ConfigParser.resolve_substitutions(config)
    if debug:
        print("Loaded config:\n" + HOCONConverter.to_json(config))

    if "logging" in config:
        if config.get("capture_exceptions", True):
            sys.excepthook = log_uncaught_exception
        logging.captureWarnings(config.get("capture_warnings", True))
        logging.config.dictConfig(config["logging"].as_plain_ordered_dict())

    return config


def require(config, key, getter="get"):
    """Fetch `key` with the named ConfigTree getter, translating lookup/parse errors into ConfigurationError."""
    try:
        return getattr(config, getter)(key)
    except Exception as e:
        raise ConfigurationError(key, "missing or malformed configuration key '{}' ({})".format(key, e))


def parse_threshold(value, key="threshold_db"):
    """Threshold in dB: a finite number >= 0 or the token "inf"."""
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "+inf", "infinity"):
            return math.inf
        try:
            value = float(value)
        except ValueError:
            raise ConfigurationError(key, "threshold '{}' is neither a number nor 'inf'".format(value))
    value = float(value)
    if value < 0:
        raise ConfigurationError(key, "threshold must be >= 0 dB or inf, got {}".format(value))
    return value


def format_threshold(value):
    return "inf" if math.isinf(value) else "{:g}".format(value)


def log_uncaught_exception(type, value, tb):
    logging.exception("Uncaught exception: {0}".format(str(value)), exc_info=(type, value, tb))
    sys.__excepthook__(type, value, tb)
