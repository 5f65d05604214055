import logging
import os
import sys

from dotenv import load_dotenv
from seria.logging import setup_logging

from tms.app import TMSApp

load_dotenv()

level = getattr(logging, os.getenv("TMS_LOG_LEVEL", "INFO").upper(), logging.INFO)

with setup_logging(level, log_filename="tms.log"):
    code = TMSApp().run(sys.argv[1:])

sys.exit(code)
