"""Django settings for using the laboratory outside a Django project.

`configure` installs ``variation_lab`` as a Django app, so its management
commands are discovered, and reads ``VARIATION_LAB_*`` environment variables
into settings of the same name. Inside an existing project, add
``"variation_lab"`` to ``INSTALLED_APPS`` and set the ``VARIATION_LAB_*``
settings there instead.

Settings:
    VARIATION_LAB_JOBS (int): Default worker count of the commands.
    VARIATION_LAB_OUT (str): Default output directory of the commands.
"""

import os
from typing import Any, Dict

import django
from django.conf import settings

DEFAULT_OUT = "variation_lab_out"


def environment_settings() -> Dict[str, Any]:
    """Return the ``VARIATION_LAB_*`` settings read from the environment."""
    return {
        "VARIATION_LAB_JOBS": int(os.environ.get("VARIATION_LAB_JOBS", os.cpu_count() or 1)),
        "VARIATION_LAB_OUT": os.environ.get("VARIATION_LAB_OUT", DEFAULT_OUT),
    }


def configure(**overrides: Any) -> None:
    """Configure Django settings once and populate the app registry.

    Does nothing to settings that are already configured, e.g. by a project
    listing ``variation_lab`` in ``INSTALLED_APPS``.

    Args:
        **overrides: Settings taking precedence over the defaults.
    """
    if not settings.configured:
        settings.configure(
            INSTALLED_APPS=["variation_lab"],
            USE_TZ=True,
            **{**environment_settings(), **overrides},
        )
    django.setup()
