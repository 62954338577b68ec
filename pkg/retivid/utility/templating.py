import logging

from jinja2 import Environment, FileSystemLoader, StrictUndefined, Template

from retivid.video.constants import TEMPLATE_DIR

logger = logging.getLogger(__name__)


def render_command(command_template, **kwargs):
    """
    Render a command line template of an external tool

    Args:
        command_template (str): jinja2 template, e.g.
            "ffmpeg -i {{ input }} -f rawvideo -pix_fmt rgb24 -"

    Keyword Args:
        All the template variables

    Returns:
        str: rendered command

    Raises:
        jinja2.exceptions.UndefinedError: when the template uses a variable
            which was not passed

    """
    template = Template(command_template, undefined=StrictUndefined)
    rendered = template.render(**kwargs)
    logger.debug(f"Rendered command: {rendered}")
    return rendered


def format_float(value, digits=4):
    """
    This is a j2 filter which prints floats of the report with fixed
    precision and keeps the infinite PSNR sentinel readable.

    Args:
        value (float): value to print
        digits (int): number of decimal digits (default: 4)

    Returns:
        str: formatted value

    """
    if value is None:
        return '-'
    if value == float('inf'):
        return 'inf'
    return f"{value:.{digits}f}"


class Templating:
    """
    Class which provides all functionality for templating
    """

    def __init__(self, base_path=TEMPLATE_DIR):
        """
        Constructor for Templating class

        Args:
            base_path (str): path from which should read the jinja2 templates
                default(RETIVID_ROOT_DIR/templates)
        """
        self._base_path = base_path

    def render_template(self, template_path, data):
        """
        Render a template with the given data.

        Args:
            template_path (str): location of the j2 template from the
                self._base_path
            data (dict): the data to be formatted into the template

        Returns: rendered template

        """
        j2_env = Environment(
            loader=FileSystemLoader(self._base_path),
            trim_blocks=True
        )
        j2_env.filters['format_float'] = format_float
        j2_template = j2_env.get_template(template_path)
        return j2_template.render(**data)
