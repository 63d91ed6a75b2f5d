######################################################################
# Copyright 2016, 2023 John J. Rofrano. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
# https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
######################################################################

# pylint: disable=function-redefined, missing-function-docstring
# flake8: noqa
"""
Lab Steps

Steps file for lab.feature
"""
import json
import os
import shlex
from behave import when, then
from compare import expect


def _invoke(context, args):
    context.result = context.runner.invoke(args=args)
    output = context.result.output.strip()
    context.document = json.loads(output) if output else None


@when('I run "{command}"')
def step_impl(context, command):
    _invoke(context, shlex.split(command))


@when('I run "{command}" in the workspace')
def step_impl(context, command):
    context.out_dir = os.path.join(context.workspace.name, "first")
    _invoke(context, shlex.split(command) + ["--out-dir", context.out_dir])


@when('I rerun the manifest')
def step_impl(context):
    context.rerun_dir = os.path.join(context.workspace.name, "rerun")
    manifest = os.path.join(context.out_dir, "manifest.json")
    _invoke(context, ["lab", "estimate", "--manifest", manifest, "--out-dir", context.rerun_dir])


@then('the exit code should be "{code}"')
def step_impl(context, code):
    expect(context.result.exit_code).to_equal(int(code))


@then('the "{key}" should be "{value}"')
def step_impl(context, key, value):
    actual = context.document[key]
    if isinstance(actual, float):
        expect(abs(actual - float(value)) < 1e-9).to_be(True)
    else:
        expect(str(actual)).to_equal(value)


@then('I should see "{text}" in the output')
def step_impl(context, text):
    expect(text in context.result.output).to_be(True)


@then('the artifacts should carry the manifest hash')
def step_impl(context):
    digest = context.document["manifest_hash"]
    with open(os.path.join(context.out_dir, "survival.csv"), encoding="utf-8") as handle:
        expect(handle.readline().strip()).to_equal(f"# manifest_sha256={digest}")
    for name in ("manifest.json", "exponent.json", "bounds.json"):
        with open(os.path.join(context.out_dir, name), encoding="utf-8") as handle:
            expect(json.load(handle)["manifest_hash"]).to_equal(digest)


@then('the survival curves should be identical')
def step_impl(context):
    with open(os.path.join(context.out_dir, "survival.csv"), "rb") as first:
        with open(os.path.join(context.rerun_dir, "survival.csv"), "rb") as second:
            expect(first.read()).to_equal(second.read())
